//! Leave-out judge propensity instruments.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::record::CaseRecord;
use crate::error::{Error, Result};
use crate::hdfe::{absorb, AbsorbOptions, FeSpec, Factor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    None,
    FelonyByOffenseGroup,
    Saturated(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    AllYears,
    FirstYearOnly,
    ThreeYearBlocks,
    ByYear,
    OmitFuture,
}

impl Horizon {
    pub const ALL: [Horizon; 5] =
        [Horizon::AllYears, Horizon::FirstYearOnly, Horizon::ThreeYearBlocks, Horizon::ByYear, Horizon::OmitFuture];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaveOut {
    OwnCases,
    /// Drop the person's cases and every case in the focal case's randomization cell.
    OwnClusterJackknife,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentSpec {
    /// Treatment column name, e.g. `mht`, `sudt`, `mht_or_sudt`, `mht_only`.
    pub treatment: String,
    pub grouping: Grouping,
    pub horizon: Horizon,
    pub leave_out: LeaveOut,
    pub fe: FeSpec,
    /// Judges with fewer cases than this in the horizon window get no instrument.
    pub min_cases: usize,
    #[serde(default)]
    pub absorb: AbsorbOptions,
}

impl InstrumentSpec {
    pub fn new(treatment: &str) -> InstrumentSpec {
        InstrumentSpec {
            treatment: treatment.into(),
            grouping: Grouping::FelonyByOffenseGroup,
            horizon: Horizon::AllYears,
            leave_out: LeaveOut::OwnCases,
            fe: FeSpec::court_time(),
            min_cases: 10,
            absorb: AbsorbOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingReason {
    Denominator,
    MinCases,
    SingleJudge,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InstrumentSummary {
    pub n: usize,
    pub n_missing: usize,
    pub missing_denominator: usize,
    pub missing_min_cases: usize,
    pub missing_single_judge: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub n_strata: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentSeries {
    pub z: Vec<Option<f64>>,
    /// Cases of the focal judge inside the horizon window.
    pub n_jt: Vec<usize>,
    /// Of those, cases dropped as belonging to the focal person or cluster.
    pub n_ijt: Vec<usize>,
    pub missing: Vec<Option<MissingReason>>,
    pub spec: InstrumentSpec,
    pub summary: InstrumentSummary,
}

impl InstrumentSeries {
    /// Values with missing entries as NaN.
    pub fn values(&self) -> Vec<f64> {
        self.z.iter().map(|v| v.unwrap_or(f64::NAN)).collect()
    }
}

/// Stratum key of a case under a grouping.
pub fn stratum_key(case: &CaseRecord, grouping: &Grouping) -> Result<String> {
    match grouping {
        Grouping::None => Ok(String::new()),
        Grouping::FelonyByOffenseGroup => Ok(format!("{}|{}", u8::from(case.felony), case.offense_group)),
        Grouping::Saturated(keys) => {
            let mut parts = Vec::with_capacity(keys.len());
            for k in keys {
                parts.push(case.key(k).ok_or_else(|| Error::MissingColumn(k.clone()))?);
            }
            Ok(parts.join("|"))
        }
    }
}

fn treatment_values(cases: &[CaseRecord], name: &str) -> Result<Vec<f64>> {
    cases
        .iter()
        .map(|c| c.numeric(name).ok_or_else(|| Error::MissingColumn(name.to_string())))
        .collect()
}

/// Per-row inputs needed by the leave-out arithmetic inside one stratum.
pub(crate) struct StratumRows {
    pub judge: Vec<u32>,
    pub person: Vec<u32>,
    pub cell: Vec<u32>,
    pub year: Vec<i32>,
    pub resid: Vec<f64>,
}

/// Set of years forming the window of a case whose judge's first stratum year
/// is `first` and whose own year is `y`.
pub(crate) fn window_contains(h: Horizon, min_year: i32, first: i32, y: i32, other: i32) -> bool {
    match h {
        Horizon::AllYears => true,
        Horizon::ByYear => other == y,
        Horizon::ThreeYearBlocks => (other - min_year).div_euclid(3) == (y - min_year).div_euclid(3),
        Horizon::FirstYearOnly => other == first,
        Horizon::OmitFuture => other <= y,
    }
}

#[derive(Default, Clone, Copy)]
struct Acc {
    s: f64,
    n: usize,
}

impl Acc {
    fn add(&mut self, v: f64) {
        self.s += v;
        self.n += 1;
    }
}

struct Out {
    z: Option<f64>,
    n_jt: usize,
    n_ijt: usize,
    missing: Option<MissingReason>,
}

fn leave_out_stratum(rows: &StratumRows, horizon: Horizon, leave_out: LeaveOut, min_cases: usize, min_year: i32) -> Vec<Out> {
    let n = rows.judge.len();
    let mut years: Vec<i32> = rows.year.clone();
    years.sort_unstable();
    years.dedup();

    let mut by_jy: HashMap<(u32, i32), Acc> = HashMap::new();
    let mut by_jpy: HashMap<(u32, u32, i32), Acc> = HashMap::new();
    let mut by_jcy: HashMap<(u32, u32, i32), Acc> = HashMap::new();
    let mut by_jpcy: HashMap<(u32, u32, u32, i32), Acc> = HashMap::new();
    let mut judge_total: BTreeMap<u32, Acc> = BTreeMap::new();
    let mut first_year: HashMap<u32, i32> = HashMap::new();
    let jack = leave_out == LeaveOut::OwnClusterJackknife;
    for i in 0..n {
        let (j, p, c, y, e) = (rows.judge[i], rows.person[i], rows.cell[i], rows.year[i], rows.resid[i]);
        by_jy.entry((j, y)).or_default().add(e);
        by_jpy.entry((j, p, y)).or_default().add(e);
        if jack {
            by_jcy.entry((j, c, y)).or_default().add(e);
            by_jpcy.entry((j, p, c, y)).or_default().add(e);
        }
        judge_total.entry(j).or_default().add(e);
        let f = first_year.entry(j).or_insert(y);
        *f = (*f).min(y);
    }

    let n_judges = judge_total.len();
    // unweighted mean over judges of their own mean residual
    let eligible: Vec<f64> = judge_total
        .values()
        .filter(|a| a.n >= min_cases)
        .map(|a| a.s / a.n as f64)
        .collect();
    let center = if eligible.is_empty() { 0.0 } else { eligible.iter().sum::<f64>() / eligible.len() as f64 };

    (0..n)
        .map(|i| {
            let (j, p, c, y) = (rows.judge[i], rows.person[i], rows.cell[i], rows.year[i]);
            let first = first_year[&j];
            let mut w = Acc::default();
            let mut l = Acc::default();
            for &t in &years {
                if !window_contains(horizon, min_year, first, y, t) {
                    continue;
                }
                if let Some(a) = by_jy.get(&(j, t)) {
                    w.s += a.s;
                    w.n += a.n;
                }
                if let Some(a) = by_jpy.get(&(j, p, t)) {
                    l.s += a.s;
                    l.n += a.n;
                }
                if jack {
                    if let Some(a) = by_jcy.get(&(j, c, t)) {
                        l.s += a.s;
                        l.n += a.n;
                    }
                    if let Some(a) = by_jpcy.get(&(j, p, c, t)) {
                        l.s -= a.s;
                        l.n -= a.n;
                    }
                }
            }
            let (z, missing) = if n_judges < 2 {
                (None, Some(MissingReason::SingleJudge))
            } else if w.n < min_cases {
                (None, Some(MissingReason::MinCases))
            } else if w.n <= l.n {
                (None, Some(MissingReason::Denominator))
            } else {
                (Some((w.s - l.s) / (w.n - l.n) as f64 - center), None)
            };
            Out { z, n_jt: w.n, n_ijt: l.n, missing }
        })
        .collect()
}

/// Leave-out residualized judge propensity.
///
/// Within each stratum the treatment is demeaned on the fixed-effect cells;
/// each case then gets its judge's mean residual over the horizon window
/// with the focal person's (or cluster's) cases removed, centered on the
/// unweighted average judge in the stratum.
pub fn build_instrument(cases: &[CaseRecord], spec: &InstrumentSpec) -> Result<InstrumentSeries> {
    let n = cases.len();
    let d = treatment_values(cases, &spec.treatment)?;
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in cases.iter().enumerate() {
        strata.entry(stratum_key(c, &spec.grouping)?).or_default().push(i);
    }
    let judges = Factor::from_keys(&cases.iter().map(|c| c.judge_id.as_str()).collect::<Vec<_>>());
    let persons = Factor::from_keys(&cases.iter().map(|c| c.person_id.as_str()).collect::<Vec<_>>());
    let fe_factors = spec.fe.factors(cases)?;
    let cells = fe_factors[0].clone();
    let min_year = cases.iter().map(|c| c.year).min().unwrap_or(0);

    let per_stratum: Vec<Result<(Vec<usize>, Vec<Out>)>> = strata
        .into_par_iter()
        .map(|(_, rows)| {
            let index = crate::hdfe::FeIndex::new(fe_factors.iter().map(|f| f.subset(&rows)).collect())?;
            let col: Vec<f64> = rows.iter().map(|&r| d[r]).collect();
            let (res, _) = absorb(&[col], &index, spec.absorb)?;
            let sr = StratumRows {
                judge: rows.iter().map(|&r| judges.ids[r]).collect(),
                person: rows.iter().map(|&r| persons.ids[r]).collect(),
                cell: rows.iter().map(|&r| cells.ids[r]).collect(),
                year: rows.iter().map(|&r| cases[r].year).collect(),
                resid: res.into_iter().next().unwrap(),
            };
            let outs = leave_out_stratum(&sr, spec.horizon, spec.leave_out, spec.min_cases, min_year);
            Ok((rows, outs))
        })
        .collect();

    let mut z = vec![None; n];
    let mut n_jt = vec![0; n];
    let mut n_ijt = vec![0; n];
    let mut missing = vec![None; n];
    let mut summary = InstrumentSummary { n, ..Default::default() };
    for r in per_stratum {
        let (rows, outs) = r?;
        summary.n_strata += 1;
        for (row, o) in rows.into_iter().zip(outs) {
            z[row] = o.z;
            n_jt[row] = o.n_jt;
            n_ijt[row] = o.n_ijt;
            missing[row] = o.missing;
        }
    }
    for m in missing.iter().flatten() {
        summary.n_missing += 1;
        match m {
            MissingReason::Denominator => summary.missing_denominator += 1,
            MissingReason::MinCases => summary.missing_min_cases += 1,
            MissingReason::SingleJudge => summary.missing_single_judge += 1,
        }
    }
    let vals: Vec<f64> = z.iter().flatten().copied().collect();
    if !vals.is_empty() {
        summary.mean = crate::linalg::mean(&vals);
        summary.sd = if vals.len() > 1 { crate::linalg::variance(&vals).sqrt() } else { 0.0 };
        summary.min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        summary.max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    Ok(InstrumentSeries { z, n_jt, n_ijt, missing, spec: spec.clone(), summary })
}
