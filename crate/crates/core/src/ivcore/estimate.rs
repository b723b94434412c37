//! OLS and 2SLS on fixed-effect absorbed data with cluster-robust VCOV.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::kp::kp_rk_f;
use crate::error::{Error, Result};
use crate::hdfe::{absorb, AbsorbOptions, FeIndex, Factor};
use crate::linalg::{cluster_meat, dependent_columns, spd_inverse, symmetrize};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Column {
        Column { name: name.into(), values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub absorb: AbsorbOptions,
    pub collinear_tol: f64,
    /// Refuse 2SLS fits whose rank F is not strictly positive.
    pub require_first_stage: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { absorb: AbsorbOptions::default(), collinear_tol: 1e-10, require_first_stage: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ols,
    Tsls,
    /// Cross-fitted partialling-out IV.
    Ddml,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimator: Estimator,
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub vcov: Vec<Vec<f64>>,
    pub n_obs: usize,
    /// Rows removed by listwise deletion of missing values.
    pub n_dropped: usize,
    pub n_clusters: usize,
    /// Kleibergen-Paap rk Wald F of the excluded instruments (2SLS only).
    pub first_stage_f: Option<f64>,
    pub adj_r2: f64,
    pub outcome_mean: f64,
    /// Regressors plus absorbed parameters counted in the small-sample factor.
    pub k_total: usize,
    pub fe_dof: usize,
    pub ss_factor: f64,
    pub absorb_iterations: usize,
    pub fingerprint: String,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn se(&self, i: usize) -> f64 {
        self.vcov[i][i].max(0.0).sqrt()
    }

    /// `(estimate, standard error)` of a named coefficient.
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.index_of(name).map(|i| (self.coef[i], self.se(i)))
    }

    pub fn vcov_matrix(&self) -> DMatrix<f64> {
        let k = self.coef.len();
        DMatrix::from_fn(k, k, |i, j| self.vcov[i][j])
    }

    /// Cluster-robust Wald F that the named coefficients are jointly zero,
    /// with p-value from F(q, G-1).
    pub fn wald(&self, names: &[String]) -> Result<(f64, f64)> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.index_of(n).ok_or_else(|| Error::MissingColumn(n.clone())))
            .collect::<Result<_>>()?;
        let q = idx.len();
        if q == 0 {
            return Err(Error::Invalid("Wald test with no coefficients".into()));
        }
        let b = DVector::from_fn(q, |i, _| self.coef[idx[i]]);
        let v = DMatrix::from_fn(q, q, |i, j| self.vcov[idx[i]][idx[j]]);
        let vinv = match spd_inverse(&v, "Wald covariance") {
            Ok(m) => m,
            Err(_) => v.pseudo_inverse(1e-12).map_err(|e| Error::Singular(e.to_string()))?,
        };
        let f = (b.transpose() * vinv * &b)[(0, 0)] / q as f64;
        let df2 = (self.n_clusters.max(2) - 1) as f64;
        let p = if f.is_finite() {
            let dist = FisherSnedecor::new(q as f64, df2).map_err(|e| Error::Domain(e.to_string()))?;
            dist.sf(f.max(0.0))
        } else {
            0.0
        };
        Ok((f, p))
    }
}

struct Prepared {
    cols: Vec<Vec<f64>>,
    y_raw: Vec<f64>,
    cluster: Factor,
    n: usize,
    dropped: usize,
    dof_full: usize,
    iterations: usize,
}

fn prepare(columns: &[&Column], fe: &[Factor], cluster: &Factor, opts: &FitOptions) -> Result<Prepared> {
    let n_all = cluster.len();
    for c in columns {
        if c.values.len() != n_all {
            return Err(Error::Invalid(format!("column `{}` has {} rows, expected {n_all}", c.name, c.values.len())));
        }
    }
    if fe.iter().any(|f| f.len() != n_all) {
        return Err(Error::Invalid("fixed-effect factor length mismatch".into()));
    }
    let keep: Vec<usize> = (0..n_all).filter(|&i| columns.iter().all(|c| c.values[i].is_finite())).collect();
    let n = keep.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let cluster = cluster.subset(&keep);
    if cluster.n_levels < 2 {
        return Err(Error::TooFewClusters(cluster.n_levels));
    }
    let index = if fe.is_empty() {
        FeIndex::intercept(n)
    } else {
        FeIndex::new(fe.iter().map(|f| f.subset(&keep)).collect())?
    };
    let raw: Vec<Vec<f64>> = columns.iter().map(|c| keep.iter().map(|&i| c.values[i]).collect()).collect();
    let (cols, report) = absorb(&raw, &index, opts.absorb)?;
    Ok(Prepared {
        y_raw: raw.into_iter().next().unwrap_or_default(),
        cols,
        dof_full: index.absorbed_dof(),
        cluster,
        n,
        dropped: n_all - n,
        iterations: report.iterations,
    })
}

fn matrix(cols: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

fn check_collinear(m: &DMatrix<f64>, names: &[String], tol: f64) -> Result<()> {
    let dep = dependent_columns(&m.tr_mul(m), tol);
    if dep.is_empty() {
        Ok(())
    } else {
        Err(Error::Collinear(dep.into_iter().map(|j| names[j].clone()).collect()))
    }
}

/// Small-sample factor G/(G-1) * (N-1)/(N-K).
pub fn small_sample_factor(g: usize, n: usize, k: usize) -> f64 {
    if n <= k {
        return f64::NAN;
    }
    (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n as f64 - k as f64))
}

/// c * B (sum_g s_g s_g') B with scores s_i = x_i u_i.
fn sandwich(bread: &DMatrix<f64>, x: &DMatrix<f64>, u: &DVector<f64>, cluster: &Factor, c: f64) -> DMatrix<f64> {
    let mut scores = x.clone();
    for (i, ui) in u.iter().enumerate() {
        scores.row_mut(i).scale_mut(*ui);
    }
    let meat = cluster_meat(&scores, &cluster.ids, cluster.n_levels);
    symmetrize(&(bread * meat * bread)) * c
}

fn adj_r2(y_raw: &[f64], u: &DVector<f64>, k_full: usize) -> f64 {
    let n = y_raw.len();
    let m = crate::linalg::mean(y_raw);
    let tss: f64 = y_raw.iter().map(|v| (v - m) * (v - m)).sum();
    let ssr = u.dot(u);
    if tss == 0.0 || n <= k_full {
        return f64::NAN;
    }
    1.0 - (ssr / (n - k_full) as f64) / (tss / (n - 1) as f64)
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Least squares of `y` on `regressors` after absorbing `fe`, clustered by `cluster`.
pub fn fit_ols(y: &Column, regressors: &[Column], fe: &[Factor], cluster: &Factor, opts: &FitOptions) -> Result<FitResult> {
    let mut all: Vec<&Column> = vec![y];
    all.extend(regressors.iter());
    let p = prepare(&all, fe, cluster, opts)?;
    let names: Vec<String> = regressors.iter().map(|c| c.name.clone()).collect();
    let k = names.len();
    let yv = DVector::from_column_slice(&p.cols[0]);
    let x = matrix(&p.cols[1..], p.n);
    check_collinear(&x, &names, opts.collinear_tol)?;
    let xtx_inv = spd_inverse(&x.tr_mul(&x), "regressor cross-product")?;
    let beta = &xtx_inv * x.tr_mul(&yv);
    let u = &yv - &x * &beta;
    let k_total = k + p.dof_full;
    let c = small_sample_factor(p.cluster.n_levels, p.n, k_total);
    let vcov = sandwich(&xtx_inv, &x, &u, &p.cluster, c);
    Ok(FitResult {
        estimator: Estimator::Ols,
        names,
        coef: beta.iter().copied().collect(),
        vcov: to_rows(&vcov),
        n_obs: p.n,
        n_dropped: p.dropped,
        n_clusters: p.cluster.n_levels,
        first_stage_f: None,
        adj_r2: adj_r2(&p.y_raw, &u, k + p.dof_full),
        outcome_mean: crate::linalg::mean(&p.y_raw),
        k_total,
        fe_dof: p.dof_full,
        ss_factor: c,
        absorb_iterations: p.iterations,
        fingerprint: String::new(),
    })
}

/// Two-stage least squares. Coefficients are ordered endogenous first, then
/// controls. Residuals use the actual endogenous values.
pub fn fit_2sls(
    y: &Column,
    endogenous: &[Column],
    instruments: &[Column],
    controls: &[Column],
    fe: &[Factor],
    cluster: &Factor,
    opts: &FitOptions,
) -> Result<FitResult> {
    let ke = endogenous.len();
    let l = instruments.len();
    let kc = controls.len();
    if ke == 0 || l < ke {
        return Err(Error::Invalid(format!("need at least as many instruments ({l}) as endogenous columns ({ke})")));
    }
    let mut all: Vec<&Column> = vec![y];
    all.extend(endogenous.iter());
    all.extend(instruments.iter());
    all.extend(controls.iter());
    let p = prepare(&all, fe, cluster, opts)?;
    let yv = DVector::from_column_slice(&p.cols[0]);
    let xe = matrix(&p.cols[1..1 + ke], p.n);
    let zx = matrix(&p.cols[1 + ke..1 + ke + l], p.n);
    let w = matrix(&p.cols[1 + ke + l..], p.n);

    let mut names: Vec<String> = endogenous.iter().map(|c| c.name.clone()).collect();
    names.extend(controls.iter().map(|c| c.name.clone()));
    let mut z_names: Vec<String> = instruments.iter().map(|c| c.name.clone()).collect();
    z_names.extend(controls.iter().map(|c| c.name.clone()));

    let x = stack(&xe, &w);
    let z = stack(&zx, &w);
    check_collinear(&x, &names, opts.collinear_tol)?;
    check_collinear(&z, &z_names, opts.collinear_tol)?;

    let ztz_inv = spd_inverse(&z.tr_mul(&z), "instrument cross-product")?;
    let xhat = &z * (&ztz_inv * z.tr_mul(&x));
    let bread = spd_inverse(&xhat.tr_mul(&xhat), "projected regressor cross-product")?;
    let beta = &bread * xhat.tr_mul(&yv);
    let u = &yv - &x * &beta;

    let k_total = ke + kc + p.dof_full;
    let c = small_sample_factor(p.cluster.n_levels, p.n, k_total);
    let vcov = sandwich(&bread, &xhat, &u, &p.cluster, c);

    let c_fs = small_sample_factor(p.cluster.n_levels, p.n, l + kc + p.dof_full);
    let f = kp_rk_f(&xe, &zx, &w, &p.cluster.ids, p.cluster.n_levels, c_fs);
    let f = match f {
        Ok(v) => v,
        Err(_) if opts.require_first_stage => return Err(Error::WeakFirstStage { f: f64::NAN }),
        Err(_) => f64::NAN,
    };
    if opts.require_first_stage && !(f > 1e-10) {
        return Err(Error::WeakFirstStage { f });
    }

    Ok(FitResult {
        estimator: Estimator::Tsls,
        names,
        coef: beta.iter().copied().collect(),
        vcov: to_rows(&vcov),
        n_obs: p.n,
        n_dropped: p.dropped,
        n_clusters: p.cluster.n_levels,
        first_stage_f: Some(f),
        adj_r2: adj_r2(&p.y_raw, &u, ke + kc + p.dof_full),
        outcome_mean: crate::linalg::mean(&p.y_raw),
        k_total,
        fe_dof: p.dof_full,
        ss_factor: c,
        absorb_iterations: p.iterations,
        fingerprint: String::new(),
    })
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.columns_mut(0, a.ncols()).copy_from(a);
    m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Factor, Factor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cl: Vec<u32> = (0..n).map(|i| (i % 20) as u32).collect();
        let fe: Vec<u32> = (0..n).map(|_| rng.random_range(0..7)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|i| 0.5 * x[i] - w[i] + rng.random::<f64>()).collect();
        (y, x, w, Factor::from_ids(fe), Factor::from_ids(cl))
    }

    #[test]
    fn outcome_equal_to_regressor() {
        let (_, x, w, fe, cl) = data(200, 1);
        let r = fit_ols(&Column::new("y", x.clone()), &[Column::new("x", x), Column::new("w", w)], &[fe], &cl, &FitOptions::default()).unwrap();
        assert!((r.coef[0] - 1.0).abs() < 1e-10);
        assert!(r.coef[1].abs() < 1e-10);
        assert!(r.vcov[0][0] < 1e-20);
    }

    #[test]
    fn tsls_with_itself_as_instrument_is_ols() {
        let (y, x, w, fe, cl) = data(300, 2);
        let o = fit_ols(&Column::new("y", y.clone()), &[Column::new("x", x.clone()), Column::new("w", w.clone())], &[fe.clone()], &cl, &FitOptions::default()).unwrap();
        let t = fit_2sls(&Column::new("y", y), &[Column::new("x", x.clone())], &[Column::new("z", x)], &[Column::new("w", w)], &[fe], &cl, &FitOptions::default()).unwrap();
        for i in 0..2 {
            assert!((o.coef[i] - t.coef[i]).abs() < 1e-12);
            for j in 0..2 {
                assert!((o.vcov[i][j] - t.vcov[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn collinear_columns_are_named() {
        let (y, x, _, fe, cl) = data(100, 3);
        let dup: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let err = fit_ols(&Column::new("y", y), &[Column::new("x", x), Column::new("x2", dup)], &[fe], &cl, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Collinear(ref v) if v == &vec!["x2".to_string()]));
    }

    #[test]
    fn missing_rows_dropped_and_empty_rejected() {
        let (mut y, x, _, fe, cl) = data(100, 4);
        y[3] = f64::NAN;
        let r = fit_ols(&Column::new("y", y), &[Column::new("x", x)], &[fe.clone()], &cl, &FitOptions::default()).unwrap();
        assert_eq!((r.n_obs, r.n_dropped), (99, 1));
        let err = fit_ols(&Column::new("y", vec![f64::NAN; 100]), &[], &[fe], &cl, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::EmptySample));
    }

    #[test]
    fn one_cluster_is_rejected() {
        let (y, x, _, fe, _) = data(50, 5);
        let err = fit_ols(&Column::new("y", y), &[Column::new("x", x)], &[fe], &Factor::from_ids(vec![0; 50]), &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::TooFewClusters(1)));
    }

    #[test]
    fn irrelevant_instrument_fails_first_stage() {
        let (y, x, _, fe, cl) = data(100, 6);
        let err = fit_2sls(&Column::new("y", y), &[Column::new("x", x)], &[Column::new("z", vec![1.0; 100])], &[], &[fe], &cl, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Collinear(_) | Error::WeakFirstStage { .. }));
    }
}
