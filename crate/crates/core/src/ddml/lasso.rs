//! Gram-based coordinate-descent Lasso with cross-validated penalty.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_N_LAMBDA: usize = 100;
pub const DEFAULT_LAMBDA_RATIO: f64 = 1e-4;
pub const DEFAULT_TOL: f64 = 1e-7;
const MAX_SWEEPS: usize = 100_000;

/// Column means and population standard deviations of the rows in use.
struct Scaling {
    means: Vec<f64>,
    sds: Vec<f64>,
    y_mean: f64,
}

fn scaling(x: &DMatrix<f64>, y: &[f64]) -> Scaling {
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let m = col.sum() / n;
        let v = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        means.push(m);
        sds.push(v.sqrt());
    }
    Scaling { means, sds, y_mean: y.iter().sum::<f64>() / n }
}

/// Gram matrix and correlations of the standardized design; constant
/// columns become zero rows and never enter.
fn moments(x: &DMatrix<f64>, y: &[f64], s: &Scaling) -> (DMatrix<f64>, DVector<f64>) {
    let n = x.nrows();
    let p = x.ncols();
    let mut xs = x.clone();
    for j in 0..p {
        let (m, sd) = (s.means[j], s.sds[j]);
        let mut c = xs.column_mut(j);
        if sd > 0.0 {
            c.apply(|v| *v = (*v - m) / sd);
        } else {
            c.fill(0.0);
        }
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - s.y_mean));
    let gram = xs.tr_mul(&xs) / n as f64;
    let c = xs.tr_mul(&yc) / n as f64;
    (gram, c)
}

fn soft(v: f64, l: f64) -> f64 {
    if v > l {
        v - l
    } else if v < -l {
        v + l
    } else {
        0.0
    }
}

/// One cyclic pass over the coordinates; `gb` tracks gram * b. Returns the largest change.
fn sweep(gram: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, b: &mut DVector<f64>, gb: &mut DVector<f64>) -> f64 {
    let mut max_delta: f64 = 0.0;
    for j in 0..b.len() {
        let gjj = gram[(j, j)];
        if gjj <= 0.0 {
            continue;
        }
        let rho = c[j] - gb[j] + gjj * b[j];
        let new = soft(rho, lambda) / gjj;
        let delta = new - b[j];
        if delta != 0.0 {
            b[j] = new;
            gb.axpy(delta, &gram.column(j), 1.0);
            max_delta = max_delta.max(delta.abs());
        }
    }
    max_delta
}

/// Minimizes (1/2n)|y - Xb|^2 + lambda |b|_1 in standardized units, warm-started at `b`.
fn coordinate_descent(gram: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, b: &mut DVector<f64>, tol: f64) {
    let mut gb = gram * &*b;
    for _ in 0..MAX_SWEEPS {
        if sweep(gram, c, lambda, b, &mut gb) < tol {
            return;
        }
    }
}

/// Penalized objective in standardized units, up to the constant |y|^2 / 2n.
#[cfg(test)]
fn objective(gram: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, b: &DVector<f64>) -> f64 {
    0.5 * (b.transpose() * gram * b)[(0, 0)] - c.dot(b) + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
}

/// Smallest penalty at which every coefficient is zero.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> f64 {
    let s = scaling(x, y);
    let (_, c) = moments(x, y, &s);
    c.amax()
}

/// `n` log-spaced penalties from `lmax` down to `ratio * lmax`.
pub fn lambda_grid(lmax: f64, n: usize, ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lmax];
    }
    (0..n).map(|k| lmax * ratio.powf(k as f64 / (n - 1) as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    /// Coefficients on the original scale, one vector per penalty.
    pub coefs: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

impl LassoPath {
    pub fn predict(&self, k: usize, x: &DMatrix<f64>) -> Vec<f64> {
        let b = DVector::from_column_slice(&self.coefs[k]);
        (x * b).iter().map(|v| v + self.intercepts[k]).collect()
    }
}

/// Lasso solutions along `lambdas` (taken in the given order, warm-started).
pub fn lasso_path(x: &DMatrix<f64>, y: &[f64], lambdas: &[f64], tol: f64) -> Result<LassoPath> {
    if x.nrows() != y.len() {
        return Err(Error::Invalid("design and outcome lengths differ".into()));
    }
    if y.is_empty() {
        return Err(Error::EmptySample);
    }
    let s = scaling(x, y);
    let (gram, c) = moments(x, y, &s);
    let mut b = DVector::zeros(x.ncols());
    let mut coefs = Vec::with_capacity(lambdas.len());
    let mut intercepts = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        coordinate_descent(&gram, &c, l, &mut b, tol);
        let beta: Vec<f64> = (0..x.ncols()).map(|j| if s.sds[j] > 0.0 { b[j] / s.sds[j] } else { 0.0 }).collect();
        let icpt = s.y_mean - beta.iter().zip(&s.means).map(|(b, m)| b * m).sum::<f64>();
        coefs.push(beta);
        intercepts.push(icpt);
    }
    Ok(LassoPath { lambdas: lambdas.to_vec(), coefs, intercepts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvLasso {
    pub lambda: f64,
    pub lambdas: Vec<f64>,
    pub cv_mse: Vec<f64>,
    /// Nonzero columns at the chosen penalty.
    pub support: Vec<usize>,
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl CvLasso {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let b = DVector::from_column_slice(&self.coef);
        (x * b).iter().map(|v| v + self.intercept).collect()
    }
}

/// K-fold cross-validated Lasso. `folds[i]` is the fold of row i in
/// `0..n_folds`. Without a grid, 100 penalties from lambda_max down to
/// 1e-4 lambda_max are used. The penalty with the smallest pooled held-out
/// MSE is refitted on all rows.
pub fn cv_lasso(x: &DMatrix<f64>, y: &[f64], folds: &[usize], n_folds: usize, grid: Option<&[f64]>) -> Result<CvLasso> {
    if n_folds < 2 {
        return Err(Error::Invalid("cross-validation needs at least two folds".into()));
    }
    if folds.len() != y.len() || x.nrows() != y.len() {
        return Err(Error::Invalid("fold, design and outcome lengths differ".into()));
    }
    let ym = y.iter().sum::<f64>() / y.len().max(1) as f64;
    if y.iter().all(|v| (v - ym).abs() == 0.0) {
        return Err(Error::ZeroVariance);
    }
    let lambdas = match grid {
        Some(g) => g.to_vec(),
        None => lambda_grid(lambda_max(x, y), DEFAULT_N_LAMBDA, DEFAULT_LAMBDA_RATIO),
    };
    let sse: Vec<Vec<f64>> = (0..n_folds)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
            if train.is_empty() || test.is_empty() {
                return Err(Error::DegenerateFold { fold: f, reason: "empty training or test rows".into() });
            }
            let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let path = lasso_path(&x.select_rows(&train), &ytr, &lambdas, DEFAULT_TOL)?;
            let xte = x.select_rows(&test);
            Ok((0..lambdas.len())
                .map(|k| path.predict(k, &xte).iter().zip(&test).map(|(p, &i)| (y[i] - p).powi(2)).sum())
                .collect())
        })
        .collect::<Result<_>>()?;
    let n = y.len() as f64;
    let cv_mse: Vec<f64> = (0..lambdas.len()).map(|k| sse.iter().map(|s| s[k]).sum::<f64>() / n).collect();
    let best = (0..lambdas.len()).fold(0, |b, k| if cv_mse[k] < cv_mse[b] { k } else { b });
    let full = lasso_path(x, y, &lambdas[..=best], DEFAULT_TOL)?;
    let coef = full.coefs[best].clone();
    let support = (0..coef.len()).filter(|&j| coef[j] != 0.0).collect();
    Ok(CvLasso { lambda: lambdas[best], lambdas, cv_mse, support, coef, intercept: full.intercepts[best] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        let x = random_design(200, 6, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y: Vec<f64> = (0..200).map(|i| 1.0 + 2.0 * x[(i, 0)] - x[(i, 3)] + rng.random::<f64>()).collect();
        let path = lasso_path(&x, &y, &[0.0], 1e-12).unwrap();
        let mut xi = DMatrix::from_element(200, 7, 1.0);
        xi.columns_mut(1, 6).copy_from(&x);
        let ols = (xi.transpose() * &xi).try_inverse().unwrap() * xi.transpose() * DVector::from_vec(y.clone());
        for j in 0..6 {
            assert!((path.coefs[0][j] - ols[j + 1]).abs() < 1e-6);
        }
        assert!((path.intercepts[0] - ols[0]).abs() < 1e-6);
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let x = random_design(100, 5, 3);
        let y: Vec<f64> = (0..100).map(|i| x[(i, 2)] * 3.0 + x[(i, 4)]).collect();
        let lm = lambda_max(&x, &y);
        let path = lasso_path(&x, &y, &[lm, lm * 0.999], 1e-10).unwrap();
        assert!(path.coefs[0].iter().all(|&b| b == 0.0));
        assert!(path.coefs[1].iter().filter(|&&b| b != 0.0).count() == 1);
    }

    #[test]
    fn single_column_outcome_selects_only_that_column() {
        let x = random_design(300, 8, 4);
        let y: Vec<f64> = (0..300).map(|i| x[(i, 5)]).collect();
        let lm = lambda_max(&x, &y);
        let path = lasso_path(&x, &y, &lambda_grid(lm, 30, 1e-3), 1e-12).unwrap();
        for b in path.coefs.iter().skip(1) {
            let support: Vec<usize> = (0..8).filter(|&j| b[j] != 0.0).collect();
            assert_eq!(support, vec![5]);
        }
    }

    #[test]
    fn zero_variance_outcome() {
        let x = random_design(20, 2, 5);
        let folds: Vec<usize> = (0..20).map(|i| i % 2).collect();
        assert!(matches!(cv_lasso(&x, &[1.0; 20], &folds, 2, None), Err(Error::ZeroVariance)));
    }

    #[test]
    fn objective_decreases_per_sweep() {
        let x = random_design(150, 10, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y: Vec<f64> = (0..150).map(|i| x[(i, 0)] - x[(i, 1)] + rng.sample::<f64, _>(StandardNormal)).collect();
        let s = scaling(&x, &y);
        let (g, c) = moments(&x, &y, &s);
        let lambda = 0.05;
        let mut b = DVector::zeros(10);
        let mut last = objective(&g, &c, lambda, &b);
        let mut gb = &g * &b;
        for _ in 0..50 {
            sweep(&g, &c, lambda, &mut b, &mut gb);
            let now = objective(&g, &c, lambda, &b);
            assert!(now <= last + 1e-15);
            last = now;
        }
    }
}
