//! Monte Carlo ground truth for the complier effect.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{SimConfig, Traits};
use super::generate::{cumulative_hazard, norm_cdf, selection_index};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Margin {
    /// Cases moved into MHT by a marginal increase in a_M, holding a_D fixed.
    ZmGivenZd,
}

const ORACLE_SEED: u64 = 0x0AC1_E5EE_D000_0001;

fn draw_traits(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Traits {
    let c = &cfg.covariates;
    Traits {
        female: rng.random_bool(c.female),
        black: rng.random_bool(c.black),
        hispanic: rng.random_bool(c.hispanic),
        first_time: rng.random_bool(c.first_time),
        prior_arrest: rng.random_bool(c.prior_arrest),
        felony: rng.random_bool(cfg.felony_share),
        young: rng.random_bool(c.young),
    }
}

/// Three-year effect of MHT for compliers along `margin`, with its Monte Carlo SE.
///
/// Case traits are drawn from the initial-case covariate law and judges from
/// the judge law. Compliers to an infinitesimal shift in a_M have U_M at the
/// threshold pi_M; each draw carries weight m_on_am when pi_M lies in [0, 1).
/// U_D is then drawn from its copula conditional on U_M, and the effect on the
/// three-year cumulative probability is averaged analytically over V.
pub fn oracle_late(cfg: &SimConfig, margin: Margin, mc_reps: usize) -> Result<(f64, f64)> {
    let Margin::ZmGivenZd = margin;
    if cfg.selection.m_on_am == 0.0 || cfg.judges.sd_m == 0.0 {
        return Err(Error::NoCompliers("MHT propensity does not respond to the judge shift".into()));
    }
    if mc_reps < 2 {
        return Err(Error::Invalid("oracle needs at least two draws".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_SEED);
    let jl = cfg.judges;
    let rho = cfg.u_corr;
    let (mut sw, mut swy) = (0.0, 0.0);
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(mc_reps);
    for _ in 0..mc_reps {
        let x = draw_traits(cfg, &mut rng);
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let a_m = jl.sd_m * e1;
        let a_d = jl.sd_d * (jl.corr * e1 + (1.0 - jl.corr * jl.corr).sqrt() * e2);
        let (pi_m, pi_d) = selection_index(cfg, &x, a_m, a_d);
        let e3: f64 = rng.sample(StandardNormal);
        if !(0.0..1.0).contains(&pi_m) {
            pairs.push((0.0, 0.0));
            continue;
        }
        let w = cfg.selection.m_on_am.abs();
        let u_m = pi_m;
        let zm = -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * u_m);
        let u_d = norm_cdf(rho * zm + (1.0 - rho * rho).sqrt() * e3);
        let t_d = pi_d >= u_d;
        let c1 = cumulative_hazard(cfg, &x, u_m, true, t_d);
        let c0 = cumulative_hazard(cfg, &x, u_m, false, t_d);
        let effect = c1[2] - c0[2];
        pairs.push((w, w * effect));
        sw += w;
        swy += w * effect;
    }
    if sw == 0.0 {
        return Err(Error::NoCompliers("no draw has an interior MHT propensity".into()));
    }
    let late = swy / sw;
    // delta-method SE of a ratio of means
    let n = mc_reps as f64;
    let wbar = sw / n;
    let var: f64 = pairs.iter().map(|(w, wy)| (wy - late * w).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((late, (var / n).sqrt() / wbar))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_effect_is_recovered() {
        // with no dependence on U_M, T_D or x, the effect is the three-year beta_m sum
        let mut cfg = SimConfig::default();
        cfg.outcome.beta_d = [0.0; 5];
        let (late, se) = oracle_late(&cfg, Margin::ZmGivenZd, 20_000).unwrap();
        let want: f64 = cfg.outcome.beta_m[..3].iter().sum();
        assert!((late - want).abs() < 1e-9, "{late} vs {want}");
        assert!(se < 1e-9);
    }

    #[test]
    fn no_compliers_when_judges_do_not_move_mht() {
        let mut cfg = SimConfig::default();
        cfg.selection.m_on_am = 0.0;
        assert!(matches!(oracle_late(&cfg, Margin::ZmGivenZd, 100), Err(Error::NoCompliers(_))));
        let mut cfg = SimConfig::default();
        cfg.selection.base_m = 5.0;
        assert!(matches!(oracle_late(&cfg, Margin::ZmGivenZd, 100), Err(Error::NoCompliers(_))));
    }

    #[test]
    fn threshold_mixture() {
        let mut cfg = SimConfig::default();
        cfg.outcome.beta_d = [0.0; 5];
        cfg.outcome.beta_m = [-0.2, 0.0, 0.0, 0.0, 0.0];
        cfg.outcome.effect_threshold = Some(super::super::config::EffectThreshold { u_m: 0.1, scale_below: 0.0, scale_above: 1.0 });
        let (late, _) = oracle_late(&cfg, Margin::ZmGivenZd, 50_000).unwrap();
        assert!(late < -0.02 && late > -0.18, "{late}");
    }
}
