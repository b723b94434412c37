//! Cost-benefit accounting for paid treatment provision: treatment cost to
//! the government, avoided crime costs by offense group, benefit-cost ratio
//! and the marginal value of public funds.
//!
//! Dollar amounts are exact decimals. Inputs are read from a TOML cost file
//! laid out like the usual sources/costs tables; see [`CostModel::default`]
//! for the published values.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rust_decimal::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::OffenseGroup;
use crate::error::{Error, Result};

const Z95: &str = "1.96";

fn d(s: &str) -> Decimal {
    Decimal::from_str_exact(s).expect("decimal literal")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Low,
    High,
    Mid,
}

impl FromStr for Bound {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Bound::Low),
            "high" => Ok(Bound::High),
            "mid" => Ok(Bound::Mid),
            other => Err(Error::Config(format!("unknown bound `{other}`"))),
        }
    }
}

/// A low/high pair of inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    #[serde(with = "rust_decimal::serde::float")]
    pub low: Decimal,
    #[serde(with = "rust_decimal::serde::float")]
    pub high: Decimal,
}

impl Range {
    pub fn new(low: &str, high: &str) -> Self {
        Range { low: d(low), high: d(high) }
    }

    fn pick(&self, b: Bound) -> Decimal {
        match b {
            Bound::Low => self.low,
            Bound::High => self.high,
            Bound::Mid => (self.low + self.high) / Decimal::TWO,
        }
    }
}

/// Point estimate with an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "rust_decimal::serde::float")]
    pub point: Decimal,
    #[serde(with = "rust_decimal::serde::float")]
    pub lower: Decimal,
    #[serde(with = "rust_decimal::serde::float")]
    pub upper: Decimal,
}

impl Interval {
    pub fn new(point: &str, lower: &str, upper: &str) -> Self {
        Interval { point: d(point), lower: d(lower), upper: d(upper) }
    }

    pub fn is_ordered(&self) -> bool {
        self.lower <= self.point && self.point <= self.upper
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}, {}]", dollars(self.point), dollars(self.lower), dollars(self.upper))
    }
}

fn dollars(x: Decimal) -> String {
    let r = x.round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero);
    if r.is_sign_negative() && !r.is_zero() {
        format!("-${:.2}", r.abs())
    } else {
        format!("${:.2}", r.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentInputs {
    pub evaluation: Range,
    pub therapy_session: Range,
    pub medication_monthly: Range,
    #[serde(with = "rust_decimal::serde::float")]
    pub medication_likelihood: Decimal,
    #[serde(with = "rust_decimal::serde::float")]
    pub medicaid_rebate: Decimal,
    /// Probation length in months; community sentences for the low bound,
    /// intermediate for the high.
    pub duration_months: Range,
    #[serde(with = "rust_decimal::serde::float")]
    pub weeks_per_month: Decimal,
    /// Share of probationers already covered by Medicaid.
    pub covered_share: Range,
    /// Sessions per year Medicaid pays for.
    pub covered_sessions: u32,
    pub covered_months: u32,
    /// Marginal excess burden per tax dollar.
    #[serde(with = "rust_decimal::serde::float")]
    pub excess_burden: Decimal,
    #[serde(with = "rust_decimal::serde::float")]
    pub out_of_pocket_multiplier: Decimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCosts {
    /// Prevalence among repeat offenses.
    #[serde(with = "rust_decimal::serde::float")]
    pub weight: Decimal,
    pub judicial: Range,
    pub offender: Range,
    pub social: Range,
    pub lost_revenue: Range,
    /// Multiplier on offender costs for the chance of a prison sentence.
    /// The published offender figures already include it, hence 1.
    #[serde(with = "rust_decimal::serde::float")]
    pub incarceration_weight: Decimal,
}

impl GroupCosts {
    fn new(weight: &str, judicial: Range, offender: Range, social: Range, lost_revenue: Range) -> Self {
        GroupCosts { weight: d(weight), judicial, offender, social, lost_revenue, incarceration_weight: Decimal::ONE }
    }

    pub fn total(&self, b: Bound) -> Decimal {
        self.judicial.pick(b) + self.offender.pick(b) * self.incarceration_weight + self.social.pick(b) + self.lost_revenue.pick(b)
    }

    fn ranges(&self) -> [&Range; 4] {
        [&self.judicial, &self.offender, &self.social, &self.lost_revenue]
    }
}

/// Willingness to pay and net government cost enter as configured inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvpfInputs {
    pub wtp: Interval,
    pub net_cost: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub treatment: TreatmentInputs,
    pub groups: BTreeMap<OffenseGroup, GroupCosts>,
    pub mvpf: MvpfInputs,
    /// Source citations per cost category, carried into the ledger.
    #[serde(default)]
    pub sources: BTreeMap<String, String>,
}

impl Default for CostModel {
    fn default() -> Self {
        let treatment = TreatmentInputs {
            evaluation: Range::new("127.12", "161.75"),
            therapy_session: Range::new("80.17", "87.53"),
            medication_monthly: Range::new("4.60", "149.50"),
            medication_likelihood: d("0.5"),
            medicaid_rebate: d("0.231"),
            duration_months: Range::new("4.8", "9.6"),
            weeks_per_month: d("4.33"),
            covered_share: Range::new("0.34", "0.38"),
            covered_sessions: 8,
            covered_months: 12,
            excess_burden: d("0.195"),
            out_of_pocket_multiplier: d("2"),
        };
        let r = Range::new;
        let mut groups = BTreeMap::new();
        groups.insert(
            OffenseGroup::ViolentProperty,
            GroupCosts::new("0.28", r("1181", "14497"), r("37720", "77583"), r("113632", "217089"), r("4204", "7235")),
        );
        groups.insert(
            OffenseGroup::FinancialFraud,
            GroupCosts::new("0.24", r("4227", "5162"), r("10764", "22140"), r("1382", "35617"), r("627", "7232")),
        );
        groups.insert(
            OffenseGroup::DrugsAlcohol,
            GroupCosts::new("0.22", r("1719", "4910"), r("20486", "42137"), r("17444", "86247"), r("877", "11836")),
        );
        groups.insert(
            OffenseGroup::TrafficPublicOrder,
            GroupCosts::new("0.25", r("8649", "10383"), r("16782", "34517"), r("3341", "54766"), r("492", "10423")),
        );
        groups.insert(
            OffenseGroup::Miscellaneous,
            GroupCosts::new("0.01", r("14", "14741"), r("39587", "81424"), r("686", "91543"), r("228", "18301")),
        );
        let sources = [
            ("judicial", "Hunt, Anderson and Saunders (2017); McCollister, French and Fang (2010)"),
            ("lost_revenue", "McCollister, French and Fang (2010)"),
            ("offender", "McLaughlin et al. (2016) plus earnings, fines and mortality adjustments"),
            ("social", "Heaton (2010); Hunt, Anderson and Saunders (2017); McCollister, French and Fang (2010)"),
            ("treatment", "Medicaid fee schedule (DHHS 2013); antidepressant prices (Cherney); CBO rebate; MEB 0.195"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        CostModel {
            treatment,
            groups,
            // 752.64 is the net cost implied by the headline MVPF of 19.3 at WTP 14,526
            mvpf: MvpfInputs {
                wtp: Interval::new("14526", "4069", "31650"),
                net_cost: Interval::new("752.64", "-790", "2721"),
            },
            sources,
        }
    }
}

impl CostModel {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: CostModel = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("cost model serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.treatment;
        let money = [
            ("evaluation", &t.evaluation),
            ("therapy_session", &t.therapy_session),
            ("medication_monthly", &t.medication_monthly),
            ("duration_months", &t.duration_months),
        ];
        for (name, r) in money {
            if r.low < Decimal::ZERO || r.high < Decimal::ZERO {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        let unit = |name: &str, x: Decimal| {
            if x < Decimal::ZERO || x > Decimal::ONE {
                Err(Error::Config(format!("{name} = {x} is not a share in [0, 1]")))
            } else {
                Ok(())
            }
        };
        unit("medication_likelihood", t.medication_likelihood)?;
        unit("medicaid_rebate", t.medicaid_rebate)?;
        unit("covered_share.low", t.covered_share.low)?;
        unit("covered_share.high", t.covered_share.high)?;
        if t.weeks_per_month <= Decimal::ZERO || t.excess_burden < Decimal::ZERO || t.out_of_pocket_multiplier < Decimal::ZERO {
            return Err(Error::Config("weeks_per_month must be positive; excess_burden and multiplier non-negative".into()));
        }
        for g in OffenseGroup::ALL {
            let c = self.groups.get(&g).ok_or_else(|| Error::MissingGroup(g.as_str().into()))?;
            unit(&format!("{}.weight", g.as_str()), c.weight)?;
            if c.incarceration_weight < Decimal::ZERO || c.ranges().iter().any(|r| r.low < Decimal::ZERO || r.high < Decimal::ZERO) {
                return Err(Error::Config(format!("{} has a negative cost", g.as_str())));
            }
        }
        let total: Decimal = self.groups.values().map(|c| c.weight).sum();
        if (total - Decimal::ONE).abs() > d("0.000000001") {
            return Err(Error::Config(format!("offense-group weights sum to {total}")));
        }
        if self.mvpf.wtp.point < Decimal::ZERO || !self.mvpf.wtp.is_ordered() || !self.mvpf.net_cost.is_ordered() {
            return Err(Error::Config("wtp and net_cost need lower <= point <= upper and wtp >= 0".into()));
        }
        Ok(())
    }
}

/// Cost components for one bound, before and after the two adjustments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub sessions: Decimal,
    pub baseline: Decimal,
    pub already_covered: Decimal,
    pub after_coverage: Decimal,
    pub government: Decimal,
}

fn breakdown(t: &TreatmentInputs, b: Bound) -> CostBreakdown {
    let months = t.duration_months.pick(b);
    let sessions = (t.weeks_per_month * months).ceil();
    let med_month = t.medication_likelihood * t.medication_monthly.pick(b) * (Decimal::ONE - t.medicaid_rebate);
    let therapy = t.therapy_session.pick(b);
    let baseline = t.evaluation.pick(b) + sessions * therapy + med_month * months;
    let covered_cost = med_month * Decimal::from(t.covered_months) + Decimal::from(t.covered_sessions) * therapy;
    let already_covered = t.covered_share.pick(b) * covered_cost;
    let after_coverage = baseline - already_covered;
    CostBreakdown { sessions, baseline, already_covered, after_coverage, government: after_coverage * (Decimal::ONE + t.excess_burden) }
}

/// Per-person treatment cost to the government. The mid bound averages the
/// low and high results.
pub fn treatment_cost(model: &CostModel, bound: Bound) -> Decimal {
    treatment_breakdown(model, bound).government
}

pub fn treatment_breakdown(model: &CostModel, bound: Bound) -> CostBreakdown {
    match bound {
        Bound::Mid => {
            let lo = breakdown(&model.treatment, Bound::Low);
            let hi = breakdown(&model.treatment, Bound::High);
            let avg = |a: Decimal, b: Decimal| (a + b) / Decimal::TWO;
            CostBreakdown {
                sessions: avg(lo.sessions, hi.sessions),
                baseline: avg(lo.baseline, hi.baseline),
                already_covered: avg(lo.already_covered, hi.already_covered),
                after_coverage: avg(lo.after_coverage, hi.after_coverage),
                government: avg(lo.government, hi.government),
            }
        }
        b => breakdown(&model.treatment, b),
    }
}

/// What the offender would pay privately: the multiplier applied to the mid
/// cost after removing already-covered care and before the tax markup.
pub fn out_of_pocket_cost(model: &CostModel) -> Decimal {
    treatment_breakdown(model, Bound::Mid).after_coverage * model.treatment.out_of_pocket_multiplier
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    #[serde(with = "rust_decimal::serde::float")]
    pub estimate: Decimal,
    #[serde(with = "rust_decimal::serde::float")]
    pub se: Decimal,
}

impl Effect {
    pub fn new(estimate: &str, se: &str) -> Self {
        Effect { estimate: d(estimate), se: d(se) }
    }
}

pub type Effects = BTreeMap<OffenseGroup, Effect>;

/// IV effects of treatment on each type of future offense, with SEs.
pub fn default_effects() -> Effects {
    [
        (OffenseGroup::ViolentProperty, Effect::new("-0.111", "0.074")),
        (OffenseGroup::FinancialFraud, Effect::new("-0.175", "0.083")),
        (OffenseGroup::DrugsAlcohol, Effect::new("-0.040", "0.062")),
        (OffenseGroup::TrafficPublicOrder, Effect::new("-0.056", "0.082")),
        (OffenseGroup::Miscellaneous, Effect::new("0.000", "0.014")),
    ]
    .into_iter()
    .collect()
}

/// Avoided crime costs: |effect| times the group's summed category costs,
/// weighted by prevalence. The interval is point ± 1.96 SE with effect SEs
/// treated as independent across groups; for the mid bound it spans the low
/// bound's lower end to the high bound's upper end.
pub fn crime_benefits(effects: &Effects, model: &CostModel, bound: Bound) -> Result<Interval> {
    for g in OffenseGroup::ALL {
        if !effects.contains_key(&g) {
            return Err(Error::MissingGroup(g.as_str().into()));
        }
        if !model.groups.contains_key(&g) {
            return Err(Error::MissingGroup(g.as_str().into()));
        }
    }
    if bound == Bound::Mid {
        let lo = crime_benefits(effects, model, Bound::Low)?;
        let hi = crime_benefits(effects, model, Bound::High)?;
        return Ok(Interval { point: (lo.point + hi.point) / Decimal::TWO, lower: lo.lower, upper: hi.upper });
    }
    let mut point = Decimal::ZERO;
    let mut var = Decimal::ZERO;
    for g in OffenseGroup::ALL {
        let e = effects[&g];
        let c = &model.groups[&g];
        let scale = c.weight * c.total(bound);
        point += scale * e.estimate.abs();
        let s = scale * e.se;
        var += s * s;
    }
    let half = d(Z95) * var.sqrt().ok_or_else(|| Error::Domain("negative variance".into()))?;
    Ok(Interval { point, lower: point - half, upper: point + half })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Mvpf {
    Finite(Decimal),
    Infinite,
}

impl Mvpf {
    pub fn to_f64(self) -> f64 {
        match self {
            Mvpf::Finite(x) => x.to_f64().unwrap_or(f64::NAN),
            Mvpf::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Mvpf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mvpf::Finite(x) => write!(f, "{}", x.round_dp(2)),
            Mvpf::Infinite => f.write_str("+inf"),
        }
    }
}

pub fn mvpf(wtp: Decimal, net_cost: Decimal) -> Result<Mvpf> {
    if wtp < Decimal::ZERO {
        return Err(Error::Domain(format!("willingness to pay {wtp} is negative")));
    }
    if net_cost > Decimal::ZERO {
        Ok(Mvpf::Finite(wtp / net_cost))
    } else if wtp > Decimal::ZERO {
        Ok(Mvpf::Infinite)
    } else {
        Err(Error::Undefined(format!("MVPF with zero willingness to pay and net cost {net_cost}")))
    }
}

pub fn benefit_cost_ratio(benefits: Decimal, cost: Decimal) -> Result<Decimal> {
    if cost <= Decimal::ZERO {
        return Err(Error::Domain(format!("benefit-cost ratio needs a positive cost, got {cost}")));
    }
    Ok(benefits / cost)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CbaResult {
    pub cost_to_government: Interval,
    pub out_of_pocket: Decimal,
    pub wtp: Interval,
    pub benefits: Interval,
    pub benefit_cost_ratio: Decimal,
    pub net_cost: Interval,
    pub mvpf: Mvpf,
    /// MVPF at (lowest WTP, highest net cost) and (highest WTP, lowest net cost).
    pub mvpf_range: (Mvpf, Mvpf),
    pub notes: Vec<(String, String)>,
}

pub fn evaluate(model: &CostModel, effects: &Effects) -> Result<CbaResult> {
    model.validate()?;
    let cost = Interval {
        point: treatment_cost(model, Bound::Mid),
        lower: treatment_cost(model, Bound::Low),
        upper: treatment_cost(model, Bound::High),
    };
    let benefits = crime_benefits(effects, model, Bound::Mid)?;
    let m = &model.mvpf;
    let lo_b = crime_benefits(effects, model, Bound::Low)?;
    let hi_b = crime_benefits(effects, model, Bound::High)?;
    let t = &model.treatment;
    let src = |k: &str| model.sources.get(k).cloned().unwrap_or_default();
    let notes = vec![
        (
            "cost_to_government".to_string(),
            format!(
                "evaluation + ceil({} x months) weekly sessions + {} x medication net of {} rebate; minus covered share x ({} months medication + {} sessions); x (1 + {}). {}",
                t.weeks_per_month,
                t.medication_likelihood,
                t.medicaid_rebate,
                t.covered_months,
                t.covered_sessions,
                t.excess_burden,
                src("treatment")
            ),
        ),
        ("out_of_pocket".to_string(), format!("{} x mid cost after coverage, before the tax markup", t.out_of_pocket_multiplier)),
        (
            "benefits".to_string(),
            format!(
                "sum over groups of weight x |effect| x (judicial + offender + social + lost revenue); low {lo_b}, high {hi_b}. judicial: {}; offender: {}; social: {}; lost revenue: {}",
                src("judicial"),
                src("offender"),
                src("social"),
                src("lost_revenue")
            ),
        ),
        ("wtp".to_string(), "configured input".to_string()),
        ("net_cost".to_string(), "configured input".to_string()),
    ];
    Ok(CbaResult {
        cost_to_government: cost,
        out_of_pocket: out_of_pocket_cost(model),
        wtp: m.wtp,
        benefit_cost_ratio: benefit_cost_ratio(benefits.point, cost.point)?,
        benefits,
        net_cost: m.net_cost,
        mvpf: mvpf(m.wtp.point, m.net_cost.point)?,
        mvpf_range: (mvpf(m.wtp.lower, m.net_cost.upper)?, mvpf(m.wtp.upper, m.net_cost.lower)?),
        notes,
    })
}

impl CbaResult {
    /// Itemized plain-text ledger.
    pub fn ledger(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "item\tvalue");
        let _ = writeln!(s, "cost_to_government\t{}", self.cost_to_government);
        let _ = writeln!(s, "out_of_pocket\t{}", dollars(self.out_of_pocket));
        let _ = writeln!(s, "benefits\t{}", self.benefits);
        let _ = writeln!(s, "benefit_cost_ratio\t{}", self.benefit_cost_ratio.round_dp(2));
        let _ = writeln!(s, "wtp\t{}", self.wtp);
        let _ = writeln!(s, "net_cost\t{}", self.net_cost);
        let _ = writeln!(s, "mvpf\t{} [{}, {}]", self.mvpf, self.mvpf_range.0, self.mvpf_range.1);
        for (k, v) in &self.notes {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Decimal, b: &str, tol: &str) -> bool {
        (a - d(b)).abs() <= d(tol)
    }

    #[test]
    fn low_bound_by_hand() {
        // 127.12 + 21*80.17 + .5*4.6*.769*4.8 = 1819.17976
        let m = CostModel::default();
        let b = treatment_breakdown(&m, Bound::Low);
        assert_eq!(b.sessions, d("21"));
        assert!(close(b.baseline, "1819.17976", "0.000000001"));
        // .34 * (.5*4.6*.769*12 + 8*80.17)
        assert!(close(b.already_covered, "225.278696", "0.000000001"), "{}", b.already_covered);
    }

    #[test]
    fn evaluation_only() {
        let mut m = CostModel::default();
        m.treatment.duration_months = Range::new("0", "0");
        m.treatment.medication_likelihood = Decimal::ZERO;
        m.treatment.covered_share = Range::new("0", "0");
        let want = d("127.12") * d("1.195");
        assert_eq!(treatment_cost(&m, Bound::Low), want);
    }

    #[test]
    fn zero_effects_zero_benefits() {
        let mut e = default_effects();
        for v in e.values_mut() {
            v.estimate = Decimal::ZERO;
        }
        let b = crime_benefits(&e, &CostModel::default(), Bound::High).unwrap();
        assert_eq!(b.point, Decimal::ZERO);
    }

    #[test]
    fn missing_group() {
        let mut e = default_effects();
        e.remove(&OffenseGroup::Miscellaneous);
        assert!(matches!(crime_benefits(&e, &CostModel::default(), Bound::Low), Err(Error::MissingGroup(_))));
    }

    #[test]
    fn mvpf_cases() {
        assert_eq!(mvpf(d("5"), d("-790")).unwrap(), Mvpf::Infinite);
        assert_eq!(mvpf(d("5"), Decimal::ZERO).unwrap(), Mvpf::Infinite);
        assert_eq!(mvpf(Decimal::ZERO, d("100")).unwrap(), Mvpf::Finite(Decimal::ZERO));
        assert!(matches!(mvpf(Decimal::ZERO, Decimal::ZERO), Err(Error::Undefined(_))));
        assert!(mvpf(d("-1"), d("5")).is_err());
    }

    #[test]
    fn ratio_cases() {
        assert_eq!(benefit_cost_ratio(Decimal::ZERO, d("3233")).unwrap(), Decimal::ZERO);
        assert_eq!(benefit_cost_ratio(d("77.1"), d("77.1")).unwrap(), Decimal::ONE);
        assert!(benefit_cost_ratio(d("1"), Decimal::ZERO).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let m = CostModel::default();
        let back = CostModel::from_toml(&m.to_toml()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut m = CostModel::default();
        m.groups.get_mut(&OffenseGroup::Miscellaneous).unwrap().weight = d("0.02");
        assert!(matches!(m.validate(), Err(Error::Config(_))));
    }
}
