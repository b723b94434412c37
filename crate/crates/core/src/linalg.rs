//! Dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Pairwise (cascade) summation; result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}

/// Sample variance with denominator n - 1.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

pub fn columns_to_matrix(cols: &[&[f64]], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    let inv = chol.inverse();
    Ok(symmetrize(&inv))
}

pub fn spd_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    Ok(chol.solve(rhs))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Indices of columns of a cross-product matrix that are linearly dependent
/// on earlier columns. Works on the correlation-scaled matrix so the
/// tolerance is relative.
pub fn dependent_columns(xtx: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let k = xtx.nrows();
    let scale: Vec<f64> = (0..k).map(|j| xtx[(j, j)].max(0.0).sqrt()).collect();
    let mut accepted: Vec<usize> = Vec::new();
    // rows of the incremental lower Cholesky factor of the accepted block
    let mut chol: Vec<Vec<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..k {
        if scale[j] == 0.0 || !scale[j].is_finite() {
            dependent.push(j);
            continue;
        }
        let c = |a: usize, b: usize| xtx[(a, b)] / (scale[a] * scale[b]);
        let mut l = Vec::with_capacity(accepted.len());
        for (r, &a) in accepted.iter().enumerate() {
            let mut v = c(a, j);
            for (t, lt) in l.iter().enumerate() {
                v -= chol[r][t] * lt;
            }
            l.push(v / chol[r][r]);
        }
        let d = 1.0 - l.iter().map(|x| x * x).sum::<f64>();
        if d < tol {
            dependent.push(j);
        } else {
            let mut row = l;
            row.push(d.sqrt());
            chol.push(row);
            accepted.push(j);
        }
    }
    dependent
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Sum of outer products of per-cluster score totals: sum_g s_g s_g'.
pub fn cluster_meat(scores: &DMatrix<f64>, clusters: &[u32], n_clusters: usize) -> DMatrix<f64> {
    let k = scores.ncols();
    let mut totals = DMatrix::<f64>::zeros(n_clusters, k);
    for (i, &g) in clusters.iter().enumerate() {
        for j in 0..k {
            totals[(g as usize, j)] += scores[(i, j)];
        }
    }
    totals.tr_mul(&totals)
}

pub fn vector_from(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// Ordinary least-squares coefficients of each column of `y` on `x`.
pub fn ols_coefficients(x: &DMatrix<f64>, y: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(y);
    spd_solve(&xtx, &xty, what)
}

/// Residualize each column of `y` on `x` (no-op when `x` has no columns).
pub fn partial_out(x: &DMatrix<f64>, y: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if x.ncols() == 0 {
        return Ok(y.clone());
    }
    let b = ols_coefficients(x, y, what)?;
    Ok(y - x * b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|v| v as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn dependent_columns_flags_later_duplicate() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 3.0, 1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 5.0, 6.0]);
        // third column = first + second
        let dep = dependent_columns(&x.tr_mul(&x), 1e-10);
        assert_eq!(dep, vec![2]);
    }

    #[test]
    fn zero_column_is_dependent() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        assert_eq!(dependent_columns(&x.tr_mul(&x), 1e-10), vec![1]);
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = sym_sqrt(&m);
        assert!((&r * &r - &m).abs().max() < 1e-12);
    }
}
