//! Kleibergen-Paap rank Wald statistic for first-stage strength.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{cluster_meat, partial_out, spd_inverse, sym_sqrt, symmetrize};

/// Orthonormal basis of the orthogonal complement of the columns of `u`.
fn complement(u: &DMatrix<f64>) -> DMatrix<f64> {
    let l = u.nrows();
    let q = u.ncols();
    let proj = DMatrix::<f64>::identity(l, l) - u * u.transpose();
    let eig = SymmetricEigen::new(symmetrize(&proj));
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    DMatrix::from_fn(l, l - q, |i, j| eig.eigenvectors[(i, order[j])])
}

/// Kleibergen-Paap rk Wald F for the null that the coefficient matrix of
/// the excluded instruments `z` on the endogenous columns `x` has rank K-1.
///
/// `x`, `z` and `controls` must already be fixed-effect absorbed; controls are
/// partialled out here. `ss_factor` scales the cluster-robust covariance of
/// the first-stage coefficients, and should match the one used for the
/// first-stage VCOV so the statistic collapses to the robust Wald F when
/// there is one endogenous variable and one instrument.
pub fn kp_rk_f(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    controls: &DMatrix<f64>,
    cluster: &[u32],
    n_clusters: usize,
    ss_factor: f64,
) -> Result<f64> {
    let n = x.nrows() as f64;
    let k = x.ncols();
    let l = z.ncols();
    if k == 0 || l < k {
        return Err(Error::Invalid(format!("rank test needs 1 <= K <= L, got K={k}, L={l}")));
    }
    let xt = partial_out(controls, x, "controls in rank test")?;
    let zt = partial_out(controls, z, "controls in rank test")?;

    let zz = zt.tr_mul(&zt);
    let zz_inv = spd_inverse(&zz, "instrument cross-product")?;
    let pi = &zz_inv * zt.tr_mul(&xt);
    let v = &xt - &zt * &pi;

    // cluster-robust covariance of vec(pi), column-major stacking
    let mut scores = DMatrix::<f64>::zeros(x.nrows(), l * k);
    for i in 0..x.nrows() {
        for c in 0..k {
            for r in 0..l {
                scores[(i, c * l + r)] = zt[(i, r)] * v[(i, c)];
            }
        }
    }
    let meat = cluster_meat(&scores, cluster, n_clusters);
    let bread = DMatrix::<f64>::identity(k, k).kronecker(&zz_inv);
    let v_pi = symmetrize(&(&bread * meat * &bread)) * ss_factor;

    let g = sym_sqrt(&(zz / n));
    let xx_inv = spd_inverse(&(xt.tr_mul(&xt) / n), "endogenous cross-product")?;
    let f = sym_sqrt(&xx_inv);
    let theta = &g * &pi * f.transpose();

    let svd = theta.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Singular("rank test SVD".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Singular("rank test SVD".into()))?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let q = k - 1;
    let u_q = DMatrix::from_fn(l, q, |i, j| u[(i, order[j])]);
    let v_k = DVector::from_fn(k, |i, _| vt[(order[q], i)]);

    // A_perp = U_rest U22^{-1} (U22 U22')^{1/2}; invariant to the basis of U_rest
    let u_rest = complement(&u_q);
    let u22 = u_rest.rows(q, l - q).into_owned();
    let u22_inv = u22
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("rank test U22 block".into()))?;
    let a_perp = &u_rest * u22_inv * sym_sqrt(&(&u22 * u22.transpose()));
    let sign = if v_k[k - 1] < 0.0 { -1.0 } else { 1.0 };
    let b_perp = v_k.transpose() * sign;

    let lambda = a_perp.transpose() * &theta * b_perp.transpose();
    let fg = f.kronecker(&g);
    let w = &fg * v_pi * fg.transpose();
    let sel = b_perp.kronecker(&a_perp.transpose());
    let omega = symmetrize(&(&sel * w * sel.transpose()));
    let omega_inv = spd_inverse(&omega, "rank test covariance")?;
    let rk = (lambda.transpose() * omega_inv * &lambda)[(0, 0)];
    Ok(rk / l as f64)
}
