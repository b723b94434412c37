//! Identification checks and effect-profile runners.

pub mod profile;
pub mod subgroup;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::corpus::{CaseRecord, Court};
use crate::error::{Error, Result};
use crate::hdfe::{absorb, AbsorbOptions, FeIndex, FeSpec};
use crate::ivcore::frame::{cluster_factor, column, columns, Extras, FE_CELL};
use crate::ivcore::{fit_ols, Column, FitOptions, FitResult};
use crate::linalg::{dependent_columns, ols_coefficients};

pub use profile::{time_profile, HorizonResult, ProfileMode, ProfileSpec};
pub use subgroup::{subgroup_effects, SubgroupOutcome, SubgroupSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub control: String,
    pub coef_treatment: f64,
    pub se_treatment: f64,
    pub coef_instrument: f64,
    pub se_instrument: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
    pub f_treatment: f64,
    pub p_treatment: f64,
    pub f_instrument: f64,
    pub p_instrument: f64,
    /// The controls explain the treatment exactly; its F is reported as infinite.
    pub perfect_fit: bool,
    pub n: usize,
}

fn joint_f(fit: &FitResult) -> Result<(f64, f64, bool)> {
    if fit.adj_r2 > 1.0 - 1e-12 {
        return Ok((f64::INFINITY, 0.0, true));
    }
    let (f, p) = fit.wald(&fit.names)?;
    Ok((f, p, false))
}

/// Regress the treatment and the judge propensity on the controls,
/// conditional on fixed effects, and test the controls jointly in each.
pub fn balance_joint_f(
    cases: &[CaseRecord],
    extras: &Extras,
    treatment: &str,
    instrument: &str,
    controls: &[String],
    fe: &FeSpec,
    cluster: &str,
) -> Result<BalanceReport> {
    let xs = columns(cases, extras, controls)?;
    let t = column(cases, extras, treatment)?;
    let z = column(cases, extras, instrument)?;
    // a common sample for both legs
    let ok: Vec<bool> = (0..cases.len()).map(|i| t.values[i].is_finite() && z.values[i].is_finite()).collect();
    let mask = |c: &Column| Column::new(c.name.clone(), c.values.iter().zip(&ok).map(|(v, k)| if *k { *v } else { f64::NAN }).collect());
    let fes = fe.factors(cases)?;
    let cl = cluster_factor(cases, fe, cluster)?;
    let opts = FitOptions::default();
    let ft = fit_ols(&mask(&t), &xs, &fes, &cl, &opts)?;
    let fz = fit_ols(&mask(&z), &xs, &fes, &cl, &opts)?;
    let (f_treatment, p_treatment, perfect_fit) = joint_f(&ft)?;
    let (f_instrument, p_instrument, _) = joint_f(&fz)?;
    let rows = controls
        .iter()
        .enumerate()
        .map(|(i, c)| BalanceRow {
            control: c.clone(),
            coef_treatment: ft.coef[i],
            se_treatment: ft.se(i),
            coef_instrument: fz.coef[i],
            se_instrument: fz.se(i),
        })
        .collect();
    Ok(BalanceReport { rows, f_treatment, p_treatment, f_instrument, p_instrument, perfect_fit, n: ft.n_obs })
}

/// Fitted values of `y` from `controls` plus fixed effects; NaN where any input is missing.
pub fn fitted_values(cases: &[CaseRecord], extras: &Extras, y: &str, controls: &[String], fe: &FeSpec) -> Result<Vec<f64>> {
    let yc = column(cases, extras, y)?;
    let xs = columns(cases, extras, controls)?;
    let n_all = cases.len();
    let keep: Vec<usize> =
        (0..n_all).filter(|&i| yc.values[i].is_finite() && xs.iter().all(|c| c.values[i].is_finite())).collect();
    if keep.is_empty() {
        return Err(Error::EmptySample);
    }
    let sub: Vec<CaseRecord> = keep.iter().map(|&i| cases[i].clone()).collect();
    let index = fe.index(&sub)?;
    let mut raw = vec![keep.iter().map(|&i| yc.values[i]).collect::<Vec<f64>>()];
    raw.extend(xs.iter().map(|c| keep.iter().map(|&i| c.values[i]).collect::<Vec<f64>>()));
    let (tilde, _) = absorb(&raw, &index, AbsorbOptions::default())?;
    let n = keep.len();
    let yv = DVector::from_column_slice(&tilde[0]);
    let resid = if xs.is_empty() {
        yv
    } else {
        let x = DMatrix::from_fn(n, xs.len(), |i, j| tilde[j + 1][i]);
        let dep = dependent_columns(&x.tr_mul(&x), 1e-10);
        let cols: Vec<usize> = (0..xs.len()).filter(|j| !dep.contains(j)).collect();
        let x = x.select_columns(&cols);
        let b = ols_coefficients(&x, &DMatrix::from_column_slice(n, 1, yv.as_slice()), "prediction design")?;
        &yv - &x * b.column(0)
    };
    let mut out = vec![f64::NAN; n_all];
    for (r, &i) in keep.iter().enumerate() {
        out[i] = raw[0][r] - resid[r];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedVsActual {
    pub f_pred: f64,
    pub p_pred: f64,
    pub f_actual: f64,
    pub p_actual: f64,
    /// Judge indicators tested after dropping those spanned by the fixed effects.
    pub n_judges: usize,
}

/// Judge-indicator F tests for predicted and actual treatment. Judges with
/// at least `min_cases` cases get an indicator; the rest form the base.
/// Indicators collinear with the fixed effects are dropped.
pub fn predicted_vs_actual_f(
    cases: &[CaseRecord],
    extras: &Extras,
    treatment: &str,
    controls: &[String],
    fe: &FeSpec,
    min_cases: usize,
) -> Result<PredictedVsActual> {
    let pred = fitted_values(cases, extras, treatment, controls, fe)?;
    let actual = column(cases, extras, treatment)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in cases {
        *counts.entry(c.judge_id.as_str()).or_default() += 1;
    }
    let judges: Vec<&str> = counts.iter().filter(|(_, &n)| n >= min_cases).map(|(j, _)| *j).collect();
    let dummies: Vec<Vec<f64>> = judges
        .iter()
        .map(|j| cases.iter().map(|c| if c.judge_id == *j { 1.0 } else { 0.0 }).collect())
        .collect();
    // drop indicators spanned by the fixed effects and earlier indicators
    let ok: Vec<usize> = (0..cases.len()).filter(|&i| pred[i].is_finite() && actual.values[i].is_finite()).collect();
    let sub: Vec<CaseRecord> = ok.iter().map(|&i| cases[i].clone()).collect();
    let index = if fe.sets.is_empty() { FeIndex::intercept(sub.len()) } else { fe.index(&sub)? };
    let raw: Vec<Vec<f64>> = dummies.iter().map(|d| ok.iter().map(|&i| d[i]).collect()).collect();
    let (tilde, _) = absorb(&raw, &index, AbsorbOptions::default())?;
    let n = ok.len();
    let x = DMatrix::from_fn(n, tilde.len(), |i, j| tilde[j][i]);
    let dep: BTreeSet<usize> = dependent_columns(&x.tr_mul(&x), 1e-8).into_iter().collect();
    let kept: Vec<Column> = (0..judges.len())
        .filter(|j| !dep.contains(j))
        .map(|j| Column::new(format!("judge:{}", judges[j]), dummies[j].clone()))
        .collect();
    if kept.is_empty() {
        return Err(Error::Invalid("judge indicators are entirely absorbed by the fixed effects".into()));
    }
    let fes = fe.factors(cases)?;
    let cl = cluster_factor(cases, fe, FE_CELL)?;
    let opts = FitOptions::default();
    let mask = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![f64::NAN; cases.len()];
        for &i in &ok {
            out[i] = v[i];
        }
        out
    };
    let names: Vec<String> = kept.iter().map(|c| c.name.clone()).collect();
    let fp = fit_ols(&Column::new("predicted", mask(&pred)), &kept, &fes, &cl, &opts)?;
    let fa = fit_ols(&Column::new(treatment, mask(&actual.values)), &kept, &fes, &cl, &opts)?;
    let (f_pred, p_pred) = fp.wald(&names)?;
    let (f_actual, p_actual) = fa.wald(&names)?;
    Ok(PredictedVsActual { f_pred, p_pred, f_actual, p_actual, n_judges: kept.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpmSpec {
    pub outcome: String,
    pub z_m: String,
    pub z_d: String,
    /// Indicator defining the subsample of SUDT recipients.
    pub sudt: String,
    pub controls: Vec<String>,
    pub fe: FeSpec,
    pub cluster: String,
}

impl Default for UpmSpec {
    fn default() -> Self {
        UpmSpec {
            outcome: "recid_3y".into(),
            z_m: "z_mht".into(),
            z_d: "z_sudt".into(),
            sudt: "sudt".into(),
            controls: crate::corpus::record::default_controls(),
            fe: FeSpec::court_time(),
            cluster: FE_CELL.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpmResult {
    pub coef: f64,
    pub se: f64,
    pub p_value: f64,
    pub n_subsample: usize,
}

/// Monotonicity check: predicted recidivism among SUDT recipients should not
/// move with z_M once z_D and fixed effects are held fixed.
pub fn upm_test(cases: &[CaseRecord], extras: &Extras, spec: &UpmSpec) -> Result<UpmResult> {
    let pred = fitted_values(cases, extras, &spec.outcome, &spec.controls, &spec.fe)?;
    let d = column(cases, extras, &spec.sudt)?;
    let rows: Vec<usize> = (0..cases.len()).filter(|&i| d.values[i] == 1.0).collect();
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    let sub: Vec<CaseRecord> = rows.iter().map(|&i| cases[i].clone()).collect();
    let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let zm = column(cases, extras, &spec.z_m)?;
    let zd = column(cases, extras, &spec.z_d)?;
    let fes = spec.fe.factors(&sub)?;
    let cl = cluster_factor(&sub, &spec.fe, &spec.cluster)?;
    let fit = fit_ols(
        &Column::new("predicted", pick(&pred)),
        &[Column::new(spec.z_m.clone(), pick(&zm.values)), Column::new(spec.z_d.clone(), pick(&zd.values))],
        &fes,
        &cl,
        &FitOptions::default(),
    )?;
    let (_, p) = fit.wald(&[spec.z_m.clone()])?;
    Ok(UpmResult { coef: fit.coef[0], se: fit.se(0), p_value: p, n_subsample: fit.n_obs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevocationTest {
    pub n: usize,
    pub same_judge_share: f64,
    pub null_share: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Judge of the most recent earlier non-revocation case of the same person,
/// for each revocation row.
pub fn revoked_case_judges(cases: &[CaseRecord]) -> Vec<Option<String>> {
    let mut by_person: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, c) in cases.iter().enumerate() {
        by_person.entry(c.person_id.as_str()).or_default().push(i);
    }
    let mut out = vec![None; cases.len()];
    for rows in by_person.values() {
        for &i in rows {
            if !cases[i].probation_violation_case {
                continue;
            }
            let d = cases[i].disposition_date;
            out[i] = rows
                .iter()
                .filter(|&&k| !cases[k].probation_violation_case && cases[k].disposition_date < d)
                .max_by(|&&a, &&b| cases[a].disposition_date.cmp(&cases[b].disposition_date).then(cases[a].case_id.cmp(&cases[b].case_id)))
                .map(|&k| cases[k].judge_id.clone());
        }
    }
    out
}

fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// One-sided test that revocations return to the original judge more often
/// than uniform assignment within the court-district-year would imply.
/// The variance is the Poisson-binomial one, sum of p_i (1 - p_i).
pub fn revocation_randomization_test(cases: &[CaseRecord]) -> Result<RevocationTest> {
    let originals = revoked_case_judges(cases);
    let mut pools: HashMap<(Court, &str, i32), BTreeSet<&str>> = HashMap::new();
    for c in cases {
        pools.entry((c.court, c.district.as_str(), c.year)).or_default().insert(c.judge_id.as_str());
    }
    let mut same = 0.0;
    let mut p0 = Vec::new();
    for (c, orig) in cases.iter().zip(&originals) {
        let Some(orig) = orig else { continue };
        let m = pools[&(c.court, c.district.as_str(), c.year)].len();
        p0.push(1.0 / m as f64);
        if *orig == c.judge_id {
            same += 1.0;
        }
    }
    if p0.is_empty() {
        return Err(Error::NoRevocations);
    }
    let n = p0.len() as f64;
    let expected: f64 = crate::linalg::pairwise_sum(&p0);
    let var: f64 = crate::linalg::pairwise_sum(&p0.iter().map(|p| p * (1.0 - p)).collect::<Vec<_>>());
    let (z, p) = if var > 0.0 {
        let z = (same - expected) / var.sqrt();
        (z, norm_sf(z))
    } else if same == expected {
        (0.0, 0.5)
    } else {
        let z = if same > expected { f64::INFINITY } else { f64::NEG_INFINITY };
        (z, norm_sf(z))
    };
    Ok(RevocationTest { n: p0.len(), same_judge_share: same / n, null_share: expected / n, z, p_value: p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn case(id: &str, person: &str, judge: &str, day: u32, revocation: bool) -> CaseRecord {
        let mut c = CaseRecord::new(id, judge, NaiveDate::from_ymd_opt(2001, 3, day).unwrap());
        c.person_id = person.into();
        c.district = "01".into();
        c.probation_violation_case = revocation;
        c
    }

    #[test]
    fn single_judge_district_is_boundary() {
        let cases = vec![case("a", "p1", "J", 1, false), case("b", "p1", "J", 9, true), case("c", "p2", "J", 2, false), case("d", "p2", "J", 10, true)];
        let r = revocation_randomization_test(&cases).unwrap();
        assert_eq!(r.same_judge_share, 1.0);
        assert_eq!(r.null_share, 1.0);
        assert_eq!(r.p_value, 0.5);
    }

    #[test]
    fn no_revocations_is_error() {
        let cases = vec![case("a", "p1", "J", 1, false)];
        assert!(matches!(revocation_randomization_test(&cases), Err(Error::NoRevocations)));
    }

    #[test]
    fn revocation_hand_example() {
        // two judges in the cell, three revocations, two back to the same judge
        let cases = vec![
            case("a", "p1", "J1", 1, false),
            case("b", "p1", "J1", 5, true),
            case("c", "p2", "J2", 1, false),
            case("d", "p2", "J2", 6, true),
            case("e", "p3", "J1", 2, false),
            case("f", "p3", "J2", 7, true),
        ];
        let r = revocation_randomization_test(&cases).unwrap();
        assert_eq!(r.n, 3);
        let z = (2.0 - 1.5) / (3.0f64 * 0.25).sqrt();
        assert!((r.z - z).abs() < 1e-12);
        assert!((r.p_value - norm_sf(z)).abs() < 1e-12);
    }
}
