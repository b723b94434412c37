use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Court {
    District,
    Superior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Spring,
    Fall,
}

impl Season {
    /// Spring covers January through June, fall July through December.
    pub fn of(date: NaiveDate) -> Season {
        if date.month() <= 6 {
            Season::Spring
        } else {
            Season::Fall
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shift {
    Am,
    Pm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Northeast,
    Midwest,
    South,
    West,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attorney {
    Private,
    Public,
    Waived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffenseGroup {
    ViolentProperty,
    FinancialFraud,
    TrafficPublicOrder,
    DrugsAlcohol,
    Miscellaneous,
}

impl OffenseGroup {
    pub const ALL: [OffenseGroup; 5] = [
        OffenseGroup::ViolentProperty,
        OffenseGroup::FinancialFraud,
        OffenseGroup::TrafficPublicOrder,
        OffenseGroup::DrugsAlcohol,
        OffenseGroup::Miscellaneous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OffenseGroup::ViolentProperty => "violent_property",
            OffenseGroup::FinancialFraud => "financial_fraud",
            OffenseGroup::TrafficPublicOrder => "traffic_public_order",
            OffenseGroup::DrugsAlcohol => "drugs_alcohol",
            OffenseGroup::Miscellaneous => "miscellaneous",
        }
    }
}

/// North Carolina structured-sentencing offense classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OffenseClass {
    FelonyA,
    FelonyB1,
    FelonyB2,
    FelonyC,
    FelonyD,
    FelonyE,
    FelonyF,
    FelonyG,
    FelonyH,
    FelonyI,
    MisdemeanorA1,
    Misdemeanor1,
    Misdemeanor2,
    Misdemeanor3,
}

impl OffenseClass {
    pub const ALL: [OffenseClass; 14] = [
        OffenseClass::FelonyA,
        OffenseClass::FelonyB1,
        OffenseClass::FelonyB2,
        OffenseClass::FelonyC,
        OffenseClass::FelonyD,
        OffenseClass::FelonyE,
        OffenseClass::FelonyF,
        OffenseClass::FelonyG,
        OffenseClass::FelonyH,
        OffenseClass::FelonyI,
        OffenseClass::MisdemeanorA1,
        OffenseClass::Misdemeanor1,
        OffenseClass::Misdemeanor2,
        OffenseClass::Misdemeanor3,
    ];

    pub fn is_felony(self) -> bool {
        self < OffenseClass::MisdemeanorA1
    }

    /// 0 is the most severe class (felony A); larger is less severe.
    pub fn severity_rank(self) -> u8 {
        self as u8
    }

    pub fn code(self) -> &'static str {
        match self {
            OffenseClass::FelonyA => "FA",
            OffenseClass::FelonyB1 => "FB1",
            OffenseClass::FelonyB2 => "FB2",
            OffenseClass::FelonyC => "FC",
            OffenseClass::FelonyD => "FD",
            OffenseClass::FelonyE => "FE",
            OffenseClass::FelonyF => "FF",
            OffenseClass::FelonyG => "FG",
            OffenseClass::FelonyH => "FH",
            OffenseClass::FelonyI => "FI",
            OffenseClass::MisdemeanorA1 => "MA1",
            OffenseClass::Misdemeanor1 => "M1",
            OffenseClass::Misdemeanor2 => "M2",
            OffenseClass::Misdemeanor3 => "M3",
        }
    }
}

impl fmt::Display for OffenseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for OffenseClass {
    type Err = Error;

    /// Accepts `FI`, `F-I`, `felony I`, `MA1`, `M1`, `misd 2`, `misdemeanor 3`, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '-' && *c != '_')
            .collect::<String>()
            .to_ascii_uppercase();
        let (felony, rest) = if let Some(r) = norm.strip_prefix("FELONY") {
            (true, r)
        } else if let Some(r) = norm.strip_prefix("MISDEMEANOR") {
            (false, r)
        } else if let Some(r) = norm.strip_prefix("MISD") {
            (false, r)
        } else if let Some(r) = norm.strip_prefix('F') {
            (true, r)
        } else if let Some(r) = norm.strip_prefix('M') {
            (false, r)
        } else {
            return Err(Error::Domain(format!("unknown offense class `{s}`")));
        };
        let class = match (felony, rest) {
            (true, "A") => OffenseClass::FelonyA,
            (true, "B1") => OffenseClass::FelonyB1,
            (true, "B2") => OffenseClass::FelonyB2,
            (true, "C") => OffenseClass::FelonyC,
            (true, "D") => OffenseClass::FelonyD,
            (true, "E") => OffenseClass::FelonyE,
            (true, "F") => OffenseClass::FelonyF,
            (true, "G") => OffenseClass::FelonyG,
            (true, "H") => OffenseClass::FelonyH,
            (true, "I") => OffenseClass::FelonyI,
            (false, "A1") => OffenseClass::MisdemeanorA1,
            (false, "1") => OffenseClass::Misdemeanor1,
            (false, "2") => OffenseClass::Misdemeanor2,
            (false, "3") => OffenseClass::Misdemeanor3,
            _ => return Err(Error::Domain(format!("unknown offense class `{s}`"))),
        };
        Ok(class)
    }
}

macro_rules! snake_enum_from_str {
    ($ty:ty, $($text:literal => $variant:expr),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($variant),)+
                    other => Err(Error::Domain(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

snake_enum_from_str!(Court, "district" => Court::District, "superior" => Court::Superior);
snake_enum_from_str!(Season, "spring" => Season::Spring, "fall" => Season::Fall);
snake_enum_from_str!(Shift, "am" => Shift::Am, "pm" => Shift::Pm);
snake_enum_from_str!(Region,
    "northeast" => Region::Northeast, "midwest" => Region::Midwest,
    "south" => Region::South, "west" => Region::West);
snake_enum_from_str!(Attorney,
    "private" => Attorney::Private, "public" => Attorney::Public, "waived" => Attorney::Waived);
snake_enum_from_str!(OffenseGroup,
    "violent_property" => OffenseGroup::ViolentProperty,
    "financial_fraud" => OffenseGroup::FinancialFraud,
    "traffic_public_order" => OffenseGroup::TrafficPublicOrder,
    "drugs_alcohol" => OffenseGroup::DrugsAlcohol,
    "miscellaneous" => OffenseGroup::Miscellaneous);

macro_rules! snake_display {
    ($ty:ty) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = format!("{:?}", self);
                let mut out = String::new();
                for (i, c) in s.chars().enumerate() {
                    if c.is_uppercase() && i > 0 {
                        out.push('_');
                    }
                    out.push(c.to_ascii_lowercase());
                }
                f.write_str(&out)
            }
        }
    };
}

snake_display!(Court);
snake_display!(Season);
snake_display!(Shift);
snake_display!(Region);
snake_display!(Attorney);
snake_display!(OffenseGroup);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    /// Age in years at disposition; filled from the modal birth date by linkage when absent.
    pub age: Option<f64>,
    pub female: bool,
    pub black: bool,
    pub hispanic: bool,
    pub region: Region,
    pub attorney: Attorney,
    pub first_time: bool,
    pub prior_arrest_last_year: bool,
    pub sex_offender: bool,
}

impl Default for Demographics {
    fn default() -> Self {
        Demographics {
            age: None,
            female: false,
            black: false,
            hispanic: false,
            region: Region::South,
            attorney: Attorney::Public,
            first_time: true,
            prior_arrest_last_year: false,
            sex_offender: false,
        }
    }
}

/// Raw identifying fields used only by record linkage.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Identity {
    pub name: String,
    /// Digits only, e.g. `011754` (MMDDYY).
    pub birthdate: String,
    pub race: String,
    pub sex: String,
    pub zip: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub person_id: String,
    pub judge_id: String,
    pub court: Court,
    pub district: String,
    /// Present iff `court == Superior`.
    pub circuit: Option<String>,
    pub year: i32,
    pub season: Season,
    /// 0 = Monday ... 6 = Sunday.
    pub day_of_week: u8,
    pub shift: Shift,
    pub disposition_date: NaiveDate,
    pub offense_class: OffenseClass,
    pub felony: bool,
    pub offense_group: OffenseGroup,
    pub prior_points: u32,
    pub special_conditions: String,
    pub mht: bool,
    pub sudt: bool,
    pub convicted: bool,
    pub probation_violation_case: bool,
    pub drug_court: bool,
    pub sentence_days: f64,
    pub active_sentence: bool,
    pub demographics: Demographics,
    pub identity: Option<Identity>,
    pub county_covariates: BTreeMap<String, f64>,
    /// Precomputed outcome columns keyed by name (simulation output, or carried through from a file).
    pub outcomes: BTreeMap<String, f64>,
}

impl CaseRecord {
    /// A minimal district-court record; callers fill in what they need.
    pub fn new(case_id: impl Into<String>, judge_id: impl Into<String>, date: NaiveDate) -> Self {
        CaseRecord {
            case_id: case_id.into(),
            person_id: String::new(),
            judge_id: judge_id.into(),
            court: Court::District,
            district: "1".into(),
            circuit: None,
            year: date.year(),
            season: Season::of(date),
            day_of_week: date.weekday().num_days_from_monday() as u8,
            shift: Shift::Am,
            disposition_date: date,
            offense_class: OffenseClass::Misdemeanor2,
            felony: false,
            offense_group: OffenseGroup::TrafficPublicOrder,
            prior_points: 0,
            special_conditions: String::new(),
            mht: false,
            sudt: false,
            convicted: true,
            probation_violation_case: false,
            drug_court: false,
            sentence_days: 0.0,
            active_sentence: false,
            demographics: Demographics::default(),
            identity: None,
            county_covariates: BTreeMap::new(),
            outcomes: BTreeMap::new(),
        }
    }

    /// Categorical key by name, used for fixed-effect cells, strata, clusters and splits.
    pub fn key(&self, name: &str) -> Option<String> {
        let d = &self.demographics;
        let b = |v: bool| Some(if v { "1" } else { "0" }.to_string());
        match name {
            "court" => Some(self.court.to_string()),
            "district" => Some(self.district.clone()),
            "circuit" => self.circuit.clone(),
            "year" => Some(self.year.to_string()),
            "season" => Some(self.season.to_string()),
            "day_of_week" => Some(self.day_of_week.to_string()),
            "shift" => Some(self.shift.to_string()),
            "judge_id" => Some(self.judge_id.clone()),
            "person_id" => Some(self.person_id.clone()),
            "case_id" => Some(self.case_id.clone()),
            "offense_group" => Some(self.offense_group.to_string()),
            "offense_class" => Some(self.offense_class.to_string()),
            "felony" => b(self.felony),
            "female" => b(d.female),
            "black" => b(d.black),
            "hispanic" => b(d.hispanic),
            "first_time" => b(d.first_time),
            "prior_arrest_last_year" => b(d.prior_arrest_last_year),
            "sex_offender" => b(d.sex_offender),
            "attorney" => Some(d.attorney.to_string()),
            "private_attorney" => b(d.attorney == Attorney::Private),
            "region" => Some(d.region.to_string()),
            "age_bin" => d.age.map(|a| age_bin(a).to_string()),
            "mht" => b(self.mht),
            "sudt" => b(self.sudt),
            "constant" => Some("all".into()),
            _ => None,
        }
    }

    /// Numeric column by name, used to build regressors. `None` means the
    /// column is unknown or missing for this row.
    pub fn numeric(&self, name: &str) -> Option<f64> {
        let d = &self.demographics;
        let f = |v: bool| Some(if v { 1.0 } else { 0.0 });
        if let Some(rest) = name.strip_prefix("county:") {
            return self.county_covariates.get(rest).copied();
        }
        if let Some(rest) = name.strip_prefix("outcome:") {
            return self.outcomes.get(rest).copied().filter(|v| v.is_finite());
        }
        if let Some(rest) = name.strip_prefix("og_") {
            return rest
                .parse::<OffenseGroup>()
                .ok()
                .map(|g| if g == self.offense_group { 1.0 } else { 0.0 });
        }
        match name {
            "age" => d.age,
            "age2" => d.age.map(|a| (a / 10.0).powi(2)),
            "age3" => d.age.map(|a| (a / 10.0).powi(3)),
            "female" => f(d.female),
            "black" => f(d.black),
            "hispanic" => f(d.hispanic),
            "first_time" => f(d.first_time),
            "prior_arrest_last_year" => f(d.prior_arrest_last_year),
            "sex_offender" => f(d.sex_offender),
            "private_attorney" => f(d.attorney == Attorney::Private),
            "public_attorney" => f(d.attorney == Attorney::Public),
            "region_midwest" => f(d.region == Region::Midwest),
            "region_south" => f(d.region == Region::South),
            "region_west" => f(d.region == Region::West),
            "felony" => f(self.felony),
            "superior" => f(self.court == Court::Superior),
            "mht" => f(self.mht),
            "sudt" => f(self.sudt),
            "mht_or_sudt" => f(self.mht || self.sudt),
            "mht_only" => f(self.mht && !self.sudt),
            "sudt_only" => f(self.sudt && !self.mht),
            "mht_and_sudt" => f(self.mht && self.sudt),
            "no_treatment" => f(!self.mht && !self.sudt),
            "prior_points" => Some(self.prior_points as f64),
            "convicted" => f(self.convicted),
            "constant" => Some(1.0),
            _ => None,
        }
    }
}

/// Age bins used for saturated interactions and subgroup splits.
pub fn age_bin(age: f64) -> &'static str {
    if age < 25.0 {
        "16_24"
    } else if age < 35.0 {
        "25_34"
    } else if age < 45.0 {
        "35_44"
    } else {
        "45_plus"
    }
}

/// Default demographic and criminal-history control set.
pub fn default_controls() -> Vec<String> {
    [
        "age",
        "age2",
        "age3",
        "female",
        "black",
        "hispanic",
        "region_midwest",
        "region_south",
        "region_west",
        "first_time",
        "prior_arrest_last_year",
        "sex_offender",
        "private_attorney",
        "public_attorney",
        "og_financial_fraud",
        "og_traffic_public_order",
        "og_drugs_alcohol",
        "og_miscellaneous",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offense_class_parsing_accepts_common_spellings() {
        assert_eq!("FI".parse::<OffenseClass>().unwrap(), OffenseClass::FelonyI);
        assert_eq!("felony B1".parse::<OffenseClass>().unwrap(), OffenseClass::FelonyB1);
        assert_eq!("misdemeanor 2".parse::<OffenseClass>().unwrap(), OffenseClass::Misdemeanor2);
        assert_eq!("MA1".parse::<OffenseClass>().unwrap(), OffenseClass::MisdemeanorA1);
        assert!("felony Z".parse::<OffenseClass>().is_err());
    }

    #[test]
    fn severity_order_puts_felonies_first() {
        assert!(OffenseClass::FelonyI.severity_rank() < OffenseClass::MisdemeanorA1.severity_rank());
        assert!(OffenseClass::Misdemeanor1.severity_rank() < OffenseClass::Misdemeanor3.severity_rank());
        assert!(OffenseClass::FelonyI.is_felony());
        assert!(!OffenseClass::Misdemeanor3.is_felony());
    }

    #[test]
    fn display_round_trips_snake_case() {
        for g in OffenseGroup::ALL {
            assert_eq!(g.to_string().parse::<OffenseGroup>().unwrap(), g);
        }
        assert_eq!(Court::Superior.to_string(), "superior");
    }
}
