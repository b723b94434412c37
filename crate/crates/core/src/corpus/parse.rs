//! Delimited case-file reader and writer.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::record::{Attorney, CaseRecord, Court, Demographics, Identity, OffenseClass, OffenseGroup, Region, Season, Shift};
use crate::error::{Error, Result};

pub const REQUIRED: [&str; 6] = ["case_id", "judge_id", "court", "district", "disposition_date", "offense_class"];

const OPTIONAL: [&str; 30] = [
    "person_id",
    "circuit",
    "year",
    "season",
    "day_of_week",
    "shift",
    "offense_group",
    "prior_points",
    "special_conditions",
    "mht",
    "sudt",
    "convicted",
    "probation_violation_case",
    "drug_court",
    "sentence_days",
    "active_sentence",
    "age",
    "female",
    "black",
    "hispanic",
    "region",
    "attorney",
    "first_time",
    "prior_arrest_last_year",
    "sex_offender",
    "name",
    "birthdate",
    "race",
    "sex",
    "zip",
];

/// Maps logical field names to the column headers of a particular extract.
/// Fields not listed are looked up under their own name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default = "comma")]
    pub delimiter: char,
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
}

fn comma() -> char {
    ','
}

impl Default for Schema {
    fn default() -> Self {
        Schema { delimiter: ',', columns: BTreeMap::new() }
    }
}

impl Schema {
    fn header_for<'a>(&'a self, logical: &'a str) -> &'a str {
        self.columns.get(logical).map(String::as_str).unwrap_or(logical)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number in the source, counting the header as line 1.
    pub line: usize,
    pub case_id: String,
    pub column: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutput {
    pub cases: Vec<CaseRecord>,
    pub rejects: Vec<Reject>,
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    ["%Y-%m-%d", "%m/%d/%Y", "%Y%m%d"]
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(s, f).ok())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" | "y" => Some(true),
        "0" | "false" | "f" | "no" | "n" => Some(false),
        _ => None,
    }
}

struct Row<'a> {
    rec: &'a csv::StringRecord,
    pos: &'a HashMap<String, usize>,
    line: usize,
    case_id: String,
}

impl Row<'_> {
    fn get(&self, logical: &str) -> Option<&str> {
        self.pos
            .get(logical)
            .and_then(|&i| self.rec.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
    }

    fn reject(&self, column: &str, reason: impl Into<String>) -> Reject {
        Reject { line: self.line, case_id: self.case_id.clone(), column: column.into(), reason: reason.into() }
    }

    fn req(&self, logical: &str) -> std::result::Result<&str, Reject> {
        self.get(logical).ok_or_else(|| self.reject(logical, "empty required field"))
    }

    fn typed<T>(&self, logical: &str, f: impl Fn(&str) -> Option<T>) -> std::result::Result<Option<T>, Reject> {
        match self.get(logical) {
            None => Ok(None),
            Some(s) => f(s).map(Some).ok_or_else(|| self.reject(logical, format!("cannot parse `{s}`"))),
        }
    }

    fn flag(&self, logical: &str, default: bool) -> std::result::Result<bool, Reject> {
        Ok(self.typed(logical, parse_bool)?.unwrap_or(default))
    }
}

fn parse_row(row: &Row<'_>, extras: &[(String, usize)]) -> std::result::Result<CaseRecord, Reject> {
    let date_text = row.req("disposition_date")?;
    let date = parse_date(date_text).ok_or_else(|| row.reject("disposition_date", format!("cannot parse date `{date_text}`")))?;
    let court: Court = row.req("court")?.parse().map_err(|e: Error| row.reject("court", e.to_string()))?;
    let class: OffenseClass = row
        .req("offense_class")?
        .parse()
        .map_err(|e: Error| row.reject("offense_class", e.to_string()))?;
    let circuit = row.get("circuit").map(str::to_string);
    if court == Court::Superior && circuit.is_none() {
        return Err(row.reject("circuit", "superior-court case without circuit"));
    }
    let mut c = CaseRecord::new(row.req("case_id")?, row.req("judge_id")?, date);
    c.court = court;
    c.district = row.req("district")?.to_string();
    c.circuit = if court == Court::Superior { circuit } else { None };
    c.person_id = row.get("person_id").unwrap_or("").to_string();
    c.year = row.typed("year", |s| s.parse().ok())?.unwrap_or(date.year());
    c.season = row.typed("season", |s| s.parse::<Season>().ok())?.unwrap_or(Season::of(date));
    c.day_of_week = row
        .typed("day_of_week", |s| s.parse::<u8>().ok().filter(|d| *d <= 6))?
        .unwrap_or(c.day_of_week);
    c.shift = row.typed("shift", |s| s.parse::<Shift>().ok())?.unwrap_or(Shift::Am);
    c.offense_class = class;
    c.felony = class.is_felony();
    c.offense_group = row
        .typed("offense_group", |s| s.parse::<OffenseGroup>().ok())?
        .unwrap_or(OffenseGroup::Miscellaneous);
    c.prior_points = row.typed("prior_points", |s| s.parse::<u32>().ok())?.unwrap_or(0);
    c.special_conditions = row.get("special_conditions").unwrap_or("").to_string();
    c.mht = row.flag("mht", false)?;
    c.sudt = row.flag("sudt", false)?;
    c.convicted = row.flag("convicted", true)?;
    c.probation_violation_case = row.flag("probation_violation_case", false)?;
    c.drug_court = row.flag("drug_court", false)?;
    c.sentence_days = row
        .typed("sentence_days", |s| s.parse::<f64>().ok().filter(|v| *v >= 0.0))?
        .unwrap_or(0.0);
    c.active_sentence = row.flag("active_sentence", false)?;
    let d = Demographics::default();
    c.demographics = Demographics {
        age: row.typed("age", |s| s.parse::<f64>().ok().filter(|v| v.is_finite()))?,
        female: row.flag("female", d.female)?,
        black: row.flag("black", d.black)?,
        hispanic: row.flag("hispanic", d.hispanic)?,
        region: row.typed("region", |s| s.parse::<Region>().ok())?.unwrap_or(d.region),
        attorney: row.typed("attorney", |s| s.parse::<Attorney>().ok())?.unwrap_or(d.attorney),
        first_time: row.flag("first_time", d.first_time)?,
        prior_arrest_last_year: row.flag("prior_arrest_last_year", d.prior_arrest_last_year)?,
        sex_offender: row.flag("sex_offender", d.sex_offender)?,
    };
    if ["name", "birthdate", "race", "sex", "zip"].iter().any(|k| row.get(k).is_some()) {
        c.identity = Some(Identity {
            name: row.get("name").unwrap_or("").to_string(),
            birthdate: row.get("birthdate").unwrap_or("").to_string(),
            race: row.get("race").unwrap_or("").to_string(),
            sex: row.get("sex").unwrap_or("").to_string(),
            zip: row.get("zip").unwrap_or("").to_string(),
        });
    }
    for (name, i) in extras {
        let text = row.rec.get(*i).map(str::trim).unwrap_or("");
        let (kind, key) = name.split_once(':').unwrap();
        if text.is_empty() {
            if kind == "outcome" {
                c.outcomes.insert(key.to_string(), f64::NAN);
            }
            continue;
        }
        let v: f64 = text.parse().map_err(|_| row.reject(name, format!("cannot parse `{text}`")))?;
        match kind {
            "county" => c.county_covariates.insert(key.to_string(), v),
            _ => c.outcomes.insert(key.to_string(), v),
        };
    }
    Ok(c)
}

/// Read a charge-level extract. Rows sharing a `case_id` collapse into one case:
/// the most severe charge supplies the offense fields, special-condition texts
/// are joined, and the earliest disposition date is kept.
pub fn parse_cases<R: Read>(source: R, schema: &Schema) -> Result<ParseOutput> {
    let delim = u8::try_from(schema.delimiter as u32)
        .map_err(|_| Error::Config(format!("delimiter `{}` is not a single byte", schema.delimiter)))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let header_pos: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();

    let mut pos = HashMap::new();
    for logical in REQUIRED.iter().chain(OPTIONAL.iter()) {
        let actual = schema.header_for(logical);
        if let Some(&i) = header_pos.get(actual) {
            pos.insert(logical.to_string(), i);
        } else if REQUIRED.contains(logical) {
            return Err(Error::MissingColumn(actual.to_string()));
        }
    }
    let extras: Vec<(String, usize)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("county:") || h.starts_with("outcome:"))
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();

    let mut rows: Vec<CaseRecord> = Vec::new();
    let mut rejects = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                rejects.push(Reject { line, case_id: String::new(), column: String::new(), reason: e.to_string() });
                continue;
            }
        };
        let case_id = pos.get("case_id").and_then(|&i| rec.get(i)).unwrap_or("").trim().to_string();
        let row = Row { rec: &rec, pos: &pos, line, case_id };
        match parse_row(&row, &extras) {
            Ok(c) => rows.push(c),
            Err(r) => rejects.push(r),
        }
    }
    Ok(ParseOutput { cases: collapse_charges(rows), rejects })
}

fn collapse_charges(rows: Vec<CaseRecord>) -> Vec<CaseRecord> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<CaseRecord>> = HashMap::new();
    for r in rows {
        if !groups.contains_key(&r.case_id) {
            order.push(r.case_id.clone());
        }
        groups.entry(r.case_id.clone()).or_default().push(r);
    }
    order
        .into_iter()
        .map(|id| {
            let charges = groups.remove(&id).unwrap();
            if charges.len() == 1 {
                return charges.into_iter().next().unwrap();
            }
            let earliest = charges.iter().min_by_key(|c| c.disposition_date).unwrap();
            let severe = charges.iter().min_by_key(|c| c.offense_class.severity_rank()).unwrap();
            let mut out = earliest.clone();
            out.offense_class = severe.offense_class;
            out.felony = severe.felony;
            out.offense_group = severe.offense_group;
            let mut seen = BTreeSet::new();
            let texts: Vec<&str> = charges
                .iter()
                .map(|c| c.special_conditions.as_str())
                .filter(|t| !t.is_empty() && seen.insert(*t))
                .collect();
            out.special_conditions = texts.join("; ");
            out.mht = charges.iter().any(|c| c.mht);
            out.sudt = charges.iter().any(|c| c.sudt);
            out.drug_court = charges.iter().any(|c| c.drug_court);
            out.probation_violation_case = charges.iter().any(|c| c.probation_violation_case);
            out.active_sentence = charges.iter().any(|c| c.active_sentence);
            out.sentence_days = charges.iter().map(|c| c.sentence_days).fold(0.0, f64::max);
            out.prior_points = charges.iter().map(|c| c.prior_points).max().unwrap_or(0);
            out
        })
        .collect()
}

fn b(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

/// Write cases in the canonical column layout read back by `parse_cases`.
pub fn write_cases<W: Write>(cases: &[CaseRecord], out: W, delimiter: u8) -> Result<()> {
    let county: BTreeSet<&String> = cases.iter().flat_map(|c| c.county_covariates.keys()).collect();
    let outcomes: BTreeSet<&String> = cases.iter().flat_map(|c| c.outcomes.keys()).collect();
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
    let mut header: Vec<String> = REQUIRED.iter().chain(OPTIONAL.iter()).map(|s| s.to_string()).collect();
    header.extend(county.iter().map(|k| format!("county:{k}")));
    header.extend(outcomes.iter().map(|k| format!("outcome:{k}")));
    w.write_record(&header)?;
    for c in cases {
        let d = &c.demographics;
        let id = c.identity.clone().unwrap_or_default();
        let mut row: Vec<String> = vec![
            c.case_id.clone(),
            c.judge_id.clone(),
            c.court.to_string(),
            c.district.clone(),
            c.disposition_date.format("%Y-%m-%d").to_string(),
            c.offense_class.to_string(),
            c.person_id.clone(),
            c.circuit.clone().unwrap_or_default(),
            c.year.to_string(),
            c.season.to_string(),
            c.day_of_week.to_string(),
            c.shift.to_string(),
            c.offense_group.to_string(),
            c.prior_points.to_string(),
            c.special_conditions.clone(),
            b(c.mht).into(),
            b(c.sudt).into(),
            b(c.convicted).into(),
            b(c.probation_violation_case).into(),
            b(c.drug_court).into(),
            c.sentence_days.to_string(),
            b(c.active_sentence).into(),
            d.age.map(|a| a.to_string()).unwrap_or_default(),
            b(d.female).into(),
            b(d.black).into(),
            b(d.hispanic).into(),
            d.region.to_string(),
            d.attorney.to_string(),
            b(d.first_time).into(),
            b(d.prior_arrest_last_year).into(),
            b(d.sex_offender).into(),
            id.name,
            id.birthdate,
            id.race,
            id.sex,
            id.zip,
        ];
        for k in &county {
            row.push(c.county_covariates.get(*k).map(|v| v.to_string()).unwrap_or_default());
        }
        for k in &outcomes {
            row.push(c.outcomes.get(*k).filter(|v| v.is_finite()).map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rejects<W: Write>(rejects: &[Reject], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rejects {
        w.serialize(r)?;
    }
    if rejects.is_empty() {
        w.write_record(["line", "case_id", "column", "reason"])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "case_id,judge_id,court,district,disposition_date,offense_class,special_conditions\n";

    #[test]
    fn charges_collapse_to_most_severe() {
        let text = format!("{HEAD}c1,j1,district,3,2001-05-02,M1,attend couns\nc1,j1,district,3,2001-04-30,FI,no contact\n");
        let out = parse_cases(text.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(out.cases.len(), 1);
        let c = &out.cases[0];
        assert_eq!(c.offense_class, OffenseClass::FelonyI);
        assert!(c.felony);
        assert_eq!(c.disposition_date, NaiveDate::from_ymd_opt(2001, 4, 30).unwrap());
        assert_eq!(c.special_conditions, "attend couns; no contact");
    }

    #[test]
    fn empty_body_is_empty_table() {
        let out = parse_cases(HEAD.as_bytes(), &Schema::default()).unwrap();
        assert!(out.cases.is_empty() && out.rejects.is_empty());
    }

    #[test]
    fn missing_column_is_named() {
        let err = parse_cases("case_id,judge_id\n".as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "court"));
    }

    #[test]
    fn bad_date_is_rejected_not_fatal() {
        let text = format!("{HEAD}c1,j1,district,3,2001-13-45,M1,\nc2,j1,district,3,2001-01-02,M1,\n");
        let out = parse_cases(text.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(out.cases.len(), 1);
        assert_eq!(out.rejects.len(), 1);
        assert_eq!(out.rejects[0].line, 2);
        assert_eq!(out.rejects[0].column, "disposition_date");
    }

    #[test]
    fn schema_renames_columns() {
        let text = "CASE;JUDGE;CT;DIST;DATE;CLS\nx;j;superior;2;2003-02-03;FH\n";
        let mut schema = Schema { delimiter: ';', ..Schema::default() };
        for (l, a) in [("case_id", "CASE"), ("judge_id", "JUDGE"), ("court", "CT"), ("district", "DIST"), ("disposition_date", "DATE"), ("offense_class", "CLS")] {
            schema.columns.insert(l.into(), a.into());
        }
        let out = parse_cases(text.as_bytes(), &schema).unwrap();
        // superior without a circuit column is rejected
        assert_eq!(out.rejects.len(), 1);
        assert_eq!(out.rejects[0].column, "circuit");
    }

    #[test]
    fn write_then_parse_round_trips() {
        let mut c = CaseRecord::new("a", "j", NaiveDate::from_ymd_opt(1999, 8, 1).unwrap());
        c.county_covariates.insert("unemp".into(), 0.061);
        c.outcomes.insert("recid3".into(), 1.0);
        c.demographics.age = Some(31.5);
        let mut buf = Vec::new();
        write_cases(std::slice::from_ref(&c), &mut buf, b',').unwrap();
        let back = parse_cases(buf.as_slice(), &Schema::default()).unwrap();
        assert_eq!(back.cases, vec![c]);
    }
}
