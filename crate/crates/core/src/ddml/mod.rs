//! Saturated designs, cross-validated Lasso and cross-fitted IV.

pub mod lasso;
pub mod saturate;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CaseRecord;
use crate::error::{Error, Result};
use crate::hdfe::{absorb, AbsorbOptions, Factor, FeSpec};
use crate::ivcore::frame::{cluster_factor, column, Extras, FE_CELL};
use crate::ivcore::{Estimator, FitResult};

pub use lasso::{cv_lasso, lambda_grid, lambda_max, lasso_path, CvLasso, LassoPath};
pub use saturate::{saturate, Design, Saturated, SaturationSpec, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdmlOptions {
    pub folds: usize,
    /// Folds of the penalty cross-validation inside each training sample.
    pub inner_folds: usize,
    pub seed: u64,
}

impl Default for DdmlOptions {
    fn default() -> Self {
        DdmlOptions { folds: 5, inner_folds: 5, seed: 0 }
    }
}

/// How often each column was selected across the outer folds, per nuisance model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionReport {
    pub outcome: BTreeMap<String, usize>,
    pub treatment: BTreeMap<String, usize>,
    pub instrument: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdmlResult {
    pub fit: FitResult,
    pub selection: SelectionReport,
}

/// Outer and inner fold of each row. Whole clusters go to one fold: cluster
/// levels are shuffled once, the outer fold is position mod k and the inner
/// fold is (position div k) mod k_inner.
pub fn cluster_folds(cluster: &Factor, k: usize, k_inner: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..cluster.n_levels).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut pos = vec![0usize; cluster.n_levels];
    for (p, &g) in order.iter().enumerate() {
        pos[g] = p;
    }
    let outer = cluster.ids.iter().map(|&g| pos[g as usize] % k).collect();
    let inner = cluster.ids.iter().map(|&g| (pos[g as usize] / k) % k_inner).collect();
    (outer, inner)
}

struct Nuisance {
    fitted: Vec<f64>,
    support: Vec<usize>,
    in_sample: Vec<f64>,
}

fn nuisance(x: &DMatrix<f64>, y: &[f64], inner: &[usize], k_inner: usize, x_test: &DMatrix<f64>) -> Result<Nuisance> {
    if x.ncols() == 0 {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        return Ok(Nuisance { fitted: vec![m; x_test.nrows()], support: vec![], in_sample: vec![m; y.len()] });
    }
    let fit = cv_lasso(x, y, inner, k_inner, None)?;
    Ok(Nuisance { fitted: fit.predict(x_test), in_sample: fit.predict(x), support: fit.support })
}

struct FoldOut {
    rows: Vec<usize>,
    y: Vec<f64>,
    d: Vec<f64>,
    v: Vec<f64>,
    sel: [Vec<usize>; 3],
}

/// Cross-fitted IV for y = theta d + g(x) + e with instruments chosen from `z`.
///
/// In each outer fold, Lasso fits on the other folds give E[y|x], E[d|x],
/// the instrument projection E[d|x,z] and E[E[d|x,z] | x]. Held-out
/// residuals y~, d~ and v~ = E[d|x,z] - E[E[d|x,z]|x] form the orthogonal
/// score v~ (y~ - theta d~), solved on the pooled folds. Standard errors are
/// clustered on the score with a G/(G-1) factor; the first-stage F is the
/// clustered Wald statistic of d~ on v~.
pub fn ddml_iv(
    y: &[f64],
    d: &[f64],
    z: &Design,
    x: &Design,
    cluster: &Factor,
    treatment_name: &str,
    opts: &DdmlOptions,
) -> Result<DdmlResult> {
    let n = y.len();
    if opts.folds < 2 || opts.inner_folds < 2 {
        return Err(Error::Invalid("cross-fitting needs at least two folds".into()));
    }
    if d.len() != n || z.matrix.nrows() != n || x.matrix.nrows() != n || cluster.len() != n {
        return Err(Error::Invalid("ddml inputs differ in length".into()));
    }
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if y.iter().chain(d).chain(z.matrix.iter()).chain(x.matrix.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("ddml inputs contain missing values".into()));
    }
    if cluster.n_levels < opts.folds {
        return Err(Error::TooFewClusters(cluster.n_levels));
    }
    let (outer, inner) = cluster_folds(cluster, opts.folds, opts.inner_folds, opts.seed);
    let xz = x.concat(z);

    let folds: Vec<FoldOut> = (0..opts.folds)
        .into_par_iter()
        .map(|f| -> Result<FoldOut> {
            let degenerate = |reason: String| Error::DegenerateFold { fold: f, reason };
            let wrap = |what: &'static str| move |e: Error| degenerate(format!("{what}: {e}"));
            let train: Vec<usize> = (0..n).filter(|&i| outer[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| outer[i] == f).collect();
            if test.is_empty() {
                return Err(degenerate("no held-out rows".into()));
            }
            let inner_tr: Vec<usize> = train.iter().map(|&i| inner[i]).collect();
            let pick = |v: &[f64], rows: &[usize]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
            let x_tr = x.matrix.select_rows(&train);
            let x_te = x.matrix.select_rows(&test);
            let xz_tr = xz.matrix.select_rows(&train);
            let xz_te = xz.matrix.select_rows(&test);
            let y_tr = pick(y, &train);
            let d_tr = pick(d, &train);
            let l = nuisance(&x_tr, &y_tr, &inner_tr, opts.inner_folds, &x_te).map_err(wrap("outcome model"))?;
            let m = nuisance(&x_tr, &d_tr, &inner_tr, opts.inner_folds, &x_te).map_err(wrap("treatment model"))?;
            let r = nuisance(&xz_tr, &d_tr, &inner_tr, opts.inner_folds, &xz_te).map_err(wrap("instrument projection"))?;
            if !r.support.iter().any(|&j| j >= x.ncols()) {
                return Err(degenerate("no instrument selected".into()));
            }
            let q = nuisance(&x_tr, &r.in_sample, &inner_tr, opts.inner_folds, &x_te);
            let q = match q {
                Ok(q) => q,
                // the projection can be constant in x, in which case its mean is the fit
                Err(Error::ZeroVariance) => nuisance(&DMatrix::zeros(train.len(), 0), &r.in_sample, &inner_tr, 2, &DMatrix::zeros(test.len(), 0))?,
                Err(e) => return Err(wrap("instrument residual model")(e)),
            };
            Ok(FoldOut {
                y: test.iter().zip(&l.fitted).map(|(&i, p)| y[i] - p).collect(),
                d: test.iter().zip(&m.fitted).map(|(&i, p)| d[i] - p).collect(),
                v: r.fitted.iter().zip(&q.fitted).map(|(a, b)| a - b).collect(),
                rows: test,
                sel: [l.support, m.support, r.support],
            })
        })
        .collect::<Result<_>>()?;

    let mut yt = vec![0.0; n];
    let mut dt = vec![0.0; n];
    let mut vt = vec![0.0; n];
    let mut selection = SelectionReport::default();
    for fo in &folds {
        for (k, &i) in fo.rows.iter().enumerate() {
            yt[i] = fo.y[k];
            dt[i] = fo.d[k];
            vt[i] = fo.v[k];
        }
        for &j in &fo.sel[0] {
            *selection.outcome.entry(x.names[j].clone()).or_default() += 1;
        }
        for &j in &fo.sel[1] {
            *selection.treatment.entry(x.names[j].clone()).or_default() += 1;
        }
        for &j in &fo.sel[2] {
            *selection.instrument.entry(xz.names[j].clone()).or_default() += 1;
        }
    }
    let svd: f64 = crate::linalg::pairwise_sum(&(0..n).map(|i| vt[i] * dt[i]).collect::<Vec<_>>());
    let svy: f64 = crate::linalg::pairwise_sum(&(0..n).map(|i| vt[i] * yt[i]).collect::<Vec<_>>());
    let svv: f64 = crate::linalg::pairwise_sum(&(0..n).map(|i| vt[i] * vt[i]).collect::<Vec<_>>());
    if svd == 0.0 || svv == 0.0 {
        return Err(Error::WeakFirstStage { f: 0.0 });
    }
    let theta = svy / svd;
    let g = cluster.n_levels as f64;
    let adj = g / (g - 1.0);
    let clustered = |score: &dyn Fn(usize) -> f64| -> f64 {
        let mut tot = vec![0.0; cluster.n_levels];
        for i in 0..n {
            tot[cluster.ids[i] as usize] += score(i);
        }
        tot.iter().map(|t| t * t).sum::<f64>()
    };
    let var = adj * clustered(&|i| vt[i] * (yt[i] - theta * dt[i])) / (svd * svd);
    let pi = svd / svv;
    let var_pi = adj * clustered(&|i| vt[i] * (dt[i] - pi * vt[i])) / (svv * svv);
    let f = pi * pi / var_pi;

    let fit = FitResult {
        estimator: Estimator::Ddml,
        names: vec![treatment_name.to_string()],
        coef: vec![theta],
        vcov: vec![vec![var]],
        n_obs: n,
        n_dropped: 0,
        n_clusters: cluster.n_levels,
        first_stage_f: Some(f),
        adj_r2: f64::NAN,
        outcome_mean: crate::linalg::mean(y),
        k_total: 1,
        fe_dof: 0,
        ss_factor: adj,
        absorb_iterations: 0,
        fingerprint: String::new(),
    };
    Ok(DdmlResult { fit, selection })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdmlSpec {
    pub outcome: String,
    pub treatment: String,
    /// Instrument interacted with the saturated indicators to form the candidates.
    pub instrument: String,
    /// Continuous columns always offered as controls (e.g. the other treatment's instrument).
    pub extra_controls: Vec<String>,
    pub saturation: SaturationSpec,
    /// Fixed effects partialled out of every column before cross-fitting.
    pub fe: Option<FeSpec>,
    pub cluster: String,
    pub options: DdmlOptions,
}

impl Default for DdmlSpec {
    fn default() -> Self {
        DdmlSpec {
            outcome: "recid_3y".into(),
            treatment: "mht".into(),
            instrument: "z_mht".into(),
            extra_controls: vec!["z_sudt".into()],
            saturation: SaturationSpec::default(),
            fe: Some(FeSpec::court_time()),
            cluster: FE_CELL.into(),
            options: DdmlOptions::default(),
        }
    }
}

/// Builds the saturated candidates from the case table and runs [`ddml_iv`].
pub fn ddml_cases(cases: &[CaseRecord], extras: &Extras, spec: &DdmlSpec) -> Result<DdmlResult> {
    let y = column(cases, extras, &spec.outcome)?.values;
    let d = column(cases, extras, &spec.treatment)?.values;
    let z = column(cases, extras, &spec.instrument)?.values;
    let extra: Vec<Vec<f64>> =
        spec.extra_controls.iter().map(|c| column(cases, extras, c).map(|c| c.values)).collect::<Result<_>>()?;
    let keep: Vec<usize> = (0..cases.len())
        .filter(|&i| y[i].is_finite() && d[i].is_finite() && z[i].is_finite() && extra.iter().all(|c| c[i].is_finite()))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptySample);
    }
    let sub: Vec<CaseRecord> = keep.iter().map(|&i| cases[i].clone()).collect();
    let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let zs = pick(&z);
    let sat = saturate(&sub, &spec.saturation, Some((&spec.instrument, &zs)))?;
    let n = keep.len();
    let mut x = sat.controls;
    if !extra.is_empty() {
        let m = DMatrix::from_fn(n, extra.len(), |i, j| extra[j][keep[i]]);
        x = x.concat(&Design { names: spec.extra_controls.clone(), matrix: m });
    }
    let mut zd = sat.instruments;
    if zd.ncols() == 0 {
        zd = Design { names: vec![spec.instrument.clone()], matrix: DMatrix::from_column_slice(n, 1, &zs) };
    }
    let mut yv = pick(&y);
    let mut dv = pick(&d);
    if let Some(fe) = &spec.fe {
        let index = fe.index(&sub)?;
        let mut cols = vec![yv, dv];
        cols.extend(x.matrix.column_iter().map(|c| c.iter().copied().collect::<Vec<f64>>()));
        cols.extend(zd.matrix.column_iter().map(|c| c.iter().copied().collect::<Vec<f64>>()));
        let (t, _) = absorb(&cols, &index, AbsorbOptions::default())?;
        yv = t[0].clone();
        dv = t[1].clone();
        let kx = x.ncols();
        x.matrix = DMatrix::from_fn(n, kx, |i, j| t[2 + j][i]);
        zd.matrix = DMatrix::from_fn(n, zd.ncols(), |i, j| t[2 + kx + j][i]);
    }
    let cl = cluster_factor(&sub, spec.fe.as_ref().unwrap_or(&FeSpec::court_time()), &spec.cluster)?;
    let mut out = ddml_iv(&yv, &dv, &zd, &x, &cl, &spec.treatment, &spec.options)?;
    out.fit.outcome_mean = crate::linalg::mean(&pick(&y));
    out.fit.n_dropped = cases.len() - n;
    out.fit.fingerprint = crate::ivcore::fingerprint(spec);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn folds_keep_clusters_together() {
        let cl = Factor::from_ids((0..300).map(|i| (i / 3) as u32).collect());
        let (outer, inner) = cluster_folds(&cl, 5, 4, 9);
        for g in 0..100 {
            let rows: Vec<usize> = (0..300).filter(|&i| cl.ids[i] == g).collect();
            assert!(rows.iter().all(|&i| outer[i] == outer[rows[0]] && inner[i] == inner[rows[0]]));
        }
        assert!((0..5).all(|f| outer.iter().filter(|&&o| o == f).count() == 60));
    }

    #[test]
    fn strong_instrument_without_confounding_matches_truth() {
        let n = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xm = DMatrix::from_fn(n, 3, |_, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        let z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let d: Vec<f64> = (0..n).map(|i| z[i] + 0.5 * xm[(i, 0)] + rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..n).map(|i| 2.0 * d[i] + xm[(i, 1)] + rng.sample::<f64, _>(StandardNormal)).collect();
        let x = Design { names: vec!["a".into(), "b".into(), "c".into()], matrix: xm };
        let zd = Design { names: vec!["z".into()], matrix: DMatrix::from_column_slice(n, 1, &z) };
        let cl = Factor::from_ids((0..n as u32).collect());
        let r = ddml_iv(&y, &d, &zd, &x, &cl, "d", &DdmlOptions::default()).unwrap();
        let se = r.fit.se(0);
        assert!((r.fit.coef[0] - 2.0).abs() < 2.0 * se + 1e-12, "{} ({se})", r.fit.coef[0]);
        assert!(r.fit.first_stage_f.unwrap() > 100.0);
    }
}
