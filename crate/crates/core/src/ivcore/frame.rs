//! Named-column model specifications resolved against a case table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::estimate::{fit_2sls, fit_ols, Column, FitOptions, FitResult};
use super::instrument::{build_instrument, Grouping, InstrumentSeries, InstrumentSpec};
use crate::corpus::{build_outcome, CaseRecord, OutcomeMode};
use crate::error::{Error, Result};
use crate::hdfe::{Factor, FeSpec};

/// Columns computed outside the case records (instruments, outcomes, fitted
/// values). NaN marks a missing entry.
pub type Extras = BTreeMap<String, Vec<f64>>;

/// Cluster key that selects the first fixed-effect set's cells.
pub const FE_CELL: &str = "fe_cell";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub outcome: String,
    /// Regressors of interest. Instrumented when `instruments` is non-empty.
    pub endogenous: Vec<String>,
    pub instruments: Vec<String>,
    pub controls: Vec<String>,
    pub fe: FeSpec,
    pub cluster: String,
    pub options: FitOptions,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            outcome: "recid_3y".into(),
            endogenous: vec!["mht".into()],
            instruments: vec!["z_mht".into()],
            controls: vec!["z_sudt".into()],
            fe: FeSpec::court_time(),
            cluster: FE_CELL.into(),
            options: FitOptions::default(),
        }
    }
}

/// Short SHA-256 digest of a value's TOML serialization.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let text = toml::to_string(value).unwrap_or_else(|e| format!("unserializable: {e}"));
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(16);
    for b in digest.iter().take(8) {
        let _ = write!(out, "{b:02x}");
    }
    out
}

pub fn column(cases: &[CaseRecord], extras: &Extras, name: &str) -> Result<Column> {
    if let Some(v) = extras.get(name) {
        if v.len() != cases.len() {
            return Err(Error::Invalid(format!("column `{name}` has {} rows for {} cases", v.len(), cases.len())));
        }
        return Ok(Column::new(name, v.clone()));
    }
    let vals: Vec<Option<f64>> = cases.iter().map(|c| c.numeric(name)).collect();
    if !cases.is_empty() && vals.iter().all(Option::is_none) {
        return Err(Error::MissingColumn(name.to_string()));
    }
    Ok(Column::new(name, vals.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()))
}

pub fn columns(cases: &[CaseRecord], extras: &Extras, names: &[String]) -> Result<Vec<Column>> {
    names.iter().map(|n| column(cases, extras, n)).collect()
}

pub fn cluster_factor(cases: &[CaseRecord], fe: &FeSpec, key: &str) -> Result<Factor> {
    if key == FE_CELL {
        let set = fe.sets.first().ok_or_else(|| Error::Config("clustering on fe_cell needs a fixed-effect set".into()))?;
        let keys = cases.iter().map(|c| fe.cell_keys(set, c)).collect::<Result<Vec<_>>>()?;
        return Ok(Factor::from_keys(&keys));
    }
    let keys = cases
        .iter()
        .map(|c| c.key(key).ok_or_else(|| Error::MissingColumn(key.to_string())))
        .collect::<Result<Vec<_>>>()?;
    Ok(Factor::from_keys(&keys))
}

/// OLS when `instruments` is empty, otherwise 2SLS with `controls` as
/// included exogenous regressors.
pub fn fit_model(cases: &[CaseRecord], extras: &Extras, spec: &ModelSpec) -> Result<FitResult> {
    if cases.is_empty() {
        return Err(Error::EmptySample);
    }
    let y = column(cases, extras, &spec.outcome)?;
    let endog = columns(cases, extras, &spec.endogenous)?;
    let controls = columns(cases, extras, &spec.controls)?;
    let fe = if spec.fe.sets.is_empty() { Vec::new() } else { spec.fe.factors(cases)? };
    let cluster = cluster_factor(cases, &spec.fe, &spec.cluster)?;
    let mut fit = if spec.instruments.is_empty() {
        let mut regs = endog;
        regs.extend(controls);
        fit_ols(&y, &regs, &fe, &cluster, &spec.options)?
    } else {
        let z = columns(cases, extras, &spec.instruments)?;
        fit_2sls(&y, &endog, &z, &controls, &fe, &cluster, &spec.options)?
    };
    fit.fingerprint = fingerprint(spec);
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeColumn {
    pub name: String,
    pub mode: OutcomeMode,
    pub horizon_years: u32,
}

/// Columns to derive before estimation. Instruments and outcomes are built
/// on the full table (later cases count toward recidivism and judge
/// propensities); the analysis sample then drops revocation hearings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameSpec {
    pub instruments: BTreeMap<String, InstrumentSpec>,
    pub outcomes: Vec<OutcomeColumn>,
    pub drop_revocations: bool,
}

impl Default for FrameSpec {
    fn default() -> Self {
        let mut instruments = BTreeMap::new();
        for (name, t) in [("z_mht", "mht"), ("z_sudt", "sudt")] {
            let mut s = InstrumentSpec::new(t);
            s.grouping = Grouping::None;
            instruments.insert(name.to_string(), s);
        }
        FrameSpec {
            instruments,
            outcomes: vec![OutcomeColumn { name: "recid_3y".into(), mode: OutcomeMode::Cumulative, horizon_years: 3 }],
            drop_revocations: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisFrame {
    pub cases: Vec<CaseRecord>,
    /// Positions of `cases` in the full table.
    pub rows: Vec<usize>,
    pub extras: Extras,
    pub instruments: BTreeMap<String, InstrumentSeries>,
}

pub fn build_frame(all: &[CaseRecord], spec: &FrameSpec) -> Result<AnalysisFrame> {
    let rows: Vec<usize> = (0..all.len()).filter(|&i| !(spec.drop_revocations && all[i].probation_violation_case)).collect();
    let mut extras = Extras::new();
    let mut instruments = BTreeMap::new();
    for (name, s) in &spec.instruments {
        let series = build_instrument(all, s)?;
        extras.insert(name.clone(), rows.iter().map(|&i| series.z[i].unwrap_or(f64::NAN)).collect());
        instruments.insert(name.clone(), series);
    }
    for o in &spec.outcomes {
        let y = build_outcome(all, o.mode, o.horizon_years)?;
        extras.insert(o.name.clone(), rows.iter().map(|&i| y[i].unwrap_or(f64::NAN)).collect());
    }
    let cases = rows.iter().map(|&i| all[i].clone()).collect();
    Ok(AnalysisFrame { cases, rows, extras, instruments })
}

/// Same specification estimated by OLS (instruments dropped).
pub fn ols_version(spec: &ModelSpec) -> ModelSpec {
    ModelSpec { instruments: Vec::new(), ..spec.clone() }
}

fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn two_sided_p(t: f64) -> f64 {
    statrs::function::erf::erfc(t.abs() / std::f64::consts::SQRT_2)
}

/// Coefficient table, one result per column: estimate with stars, SE in
/// parentheses, then F, outcome mean, N and adjusted R-squared rows.
pub fn report_table(results: &[(String, FitResult)], rows: &[String], delimiter: char) -> String {
    let d = delimiter.to_string();
    let mut out = String::new();
    let mut header = vec![String::new()];
    header.extend(results.iter().map(|(l, _)| l.clone()));
    out.push_str(&header.join(&d));
    out.push('\n');
    for name in rows {
        let mut est = vec![name.clone()];
        let mut se = vec![String::new()];
        for (_, r) in results {
            match r.index_of(name) {
                Some(i) => {
                    let s = r.se(i);
                    est.push(format!("{:.3}{}", r.coef[i], stars(two_sided_p(r.coef[i] / s))));
                    se.push(format!("({s:.3})"));
                }
                None => {
                    est.push(String::new());
                    se.push(String::new());
                }
            }
        }
        out.push_str(&est.join(&d));
        out.push('\n');
        out.push_str(&se.join(&d));
        out.push('\n');
    }
    let mut row = |label: &str, f: &dyn Fn(&FitResult) -> String| {
        let mut cells = vec![label.to_string()];
        cells.extend(results.iter().map(|(_, r)| f(r)));
        out.push_str(&cells.join(&d));
        out.push('\n');
    };
    row("1st Stage F-Stat", &|r| r.first_stage_f.map(|f| format!("{f:.0}")).unwrap_or_default());
    row("Outcome Mean", &|r| format!("{:.3}", r.outcome_mean));
    row("Observations", &|r| r.n_obs.to_string());
    row("Adj. R-squared", &|r| format!("{:.3}", r.adj_r2));
    row("Fingerprint", &|r| r.fingerprint.clone());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = ModelSpec::default();
        let mut b = a.clone();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        b.controls.push("age".into());
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a).len(), 16);
    }

    #[test]
    fn unknown_column_is_schema_error() {
        let cases = vec![CaseRecord::new("c1", "j1", chrono::NaiveDate::from_ymd_opt(2000, 1, 3).unwrap())];
        assert!(matches!(column(&cases, &Extras::new(), "nope"), Err(Error::MissingColumn(_))));
        assert!(column(&cases, &Extras::new(), "mht").is_ok());
    }

    #[test]
    fn empty_table() {
        assert!(matches!(fit_model(&[], &Extras::new(), &ModelSpec::default()), Err(Error::EmptySample)));
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(stars(0.001), "***");
        assert_eq!(stars(0.03), "**");
        assert_eq!(stars(0.07), "*");
        assert_eq!(stars(0.2), "");
    }
}
