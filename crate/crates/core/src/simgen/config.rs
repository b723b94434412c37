use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear effects of the binary case characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CovEffects {
    pub female: f64,
    pub black: f64,
    pub hispanic: f64,
    pub first_time: f64,
    pub prior_arrest: f64,
    pub felony: f64,
    pub young: f64,
}

impl CovEffects {
    pub fn dot(&self, x: &Traits) -> f64 {
        let f = |b: bool| if b { 1.0 } else { 0.0 };
        self.female * f(x.female)
            + self.black * f(x.black)
            + self.hispanic * f(x.hispanic)
            + self.first_time * f(x.first_time)
            + self.prior_arrest * f(x.prior_arrest)
            + self.felony * f(x.felony)
            + self.young * f(x.young)
    }

    fn abs_sum(&self) -> f64 {
        [self.female, self.black, self.hispanic, self.first_time, self.prior_arrest, self.felony, self.young]
            .iter()
            .map(|v| v.abs())
            .sum()
    }
}

/// Binary characteristics of one case that enter the latent model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Traits {
    pub female: bool,
    pub black: bool,
    pub hispanic: bool,
    pub first_time: bool,
    pub prior_arrest: bool,
    pub felony: bool,
    pub young: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateLaw {
    pub female: f64,
    pub black: f64,
    pub hispanic: f64,
    pub first_time: f64,
    pub prior_arrest: f64,
    pub sex_offender: f64,
    pub private_attorney: f64,
    pub waived_attorney: f64,
    pub young: f64,
}

impl Default for CovariateLaw {
    fn default() -> Self {
        CovariateLaw {
            female: 0.25,
            black: 0.45,
            hispanic: 0.06,
            first_time: 0.5,
            prior_arrest: 0.3,
            sex_offender: 0.02,
            private_attorney: 0.3,
            waived_attorney: 0.2,
            young: 0.35,
        }
    }
}

/// Judge-level latent propensity shifts (a_M, a_D), bivariate normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeLaw {
    pub sd_m: f64,
    pub sd_d: f64,
    pub corr: f64,
}

impl Default for JudgeLaw {
    fn default() -> Self {
        JudgeLaw { sd_m: 0.04, sd_d: 0.04, corr: 0.3 }
    }
}

/// Latent-index selection:
/// pi_M = base_m + m_on_am a_M + m_on_ad a_D + x_m'x,
/// pi_D = base_d + d_on_ad a_D + upm_violation a_M (1 + 2 prior_arrest) + x_d'x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Selection {
    pub base_m: f64,
    pub base_d: f64,
    pub m_on_am: f64,
    pub m_on_ad: f64,
    pub d_on_ad: f64,
    pub upm_violation: f64,
    pub x_m: CovEffects,
    pub x_d: CovEffects,
}

impl Default for Selection {
    fn default() -> Self {
        Selection {
            base_m: 0.10,
            base_d: 0.12,
            m_on_am: 1.0,
            m_on_ad: 0.0,
            d_on_ad: 1.0,
            upm_violation: 0.0,
            x_m: CovEffects { female: 0.02, black: -0.01, first_time: -0.01, young: 0.01, ..CovEffects::default() },
            x_d: CovEffects { prior_arrest: 0.03, young: 0.01, ..CovEffects::default() },
        }
    }
}

/// Optional dependence of the MHT effect on U_M.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectThreshold {
    pub u_m: f64,
    pub scale_below: f64,
    pub scale_above: f64,
}

/// Next-case timing. For each case a uniform V is compared with cumulative
/// yearly probabilities p_k = q_k (1 + kappa (1 - 2 U_M)) m(x) + beta_m,k T_M + beta_d,k T_D,
/// where m(x) = 1 + risk_x'(x - E x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutcomeLaw {
    pub base_hazard: [f64; 5],
    pub kappa: f64,
    pub risk_x: CovEffects,
    pub beta_m: [f64; 5],
    pub beta_d: [f64; 5],
    pub effect_threshold: Option<EffectThreshold>,
    pub scale_first_time: f64,
    pub scale_repeat: f64,
}

impl Default for OutcomeLaw {
    fn default() -> Self {
        OutcomeLaw {
            base_hazard: [0.16, 0.10, 0.08, 0.05, 0.04],
            kappa: 0.2,
            risk_x: CovEffects { prior_arrest: 0.12, first_time: -0.08, young: 0.06, ..CovEffects::default() },
            beta_m: [-0.06, -0.035, -0.025, 0.0, 0.0],
            beta_d: [-0.02, -0.01, -0.01, 0.0, 0.0],
            effect_threshold: None,
            scale_first_time: 1.0,
            scale_repeat: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Persons whose initial case falls inside the window. Persons entering
    /// during the burn-in come on top, at the same yearly rate.
    pub n_cases: usize,
    pub n_judges: usize,
    pub n_districts: usize,
    pub districts_per_circuit: usize,
    pub superior_judge_share: f64,
    pub start_year: i32,
    pub end_year: i32,
    /// Years simulated before `start_year` but not recorded, so the mix of
    /// first and repeat cases is stationary inside the window.
    pub burn_in_years: u32,
    /// Felony cases are heard in superior court, misdemeanors in district court.
    pub felony_share: f64,
    pub covariates: CovariateLaw,
    pub judges: JudgeLaw,
    pub selection: Selection,
    /// Gaussian-copula correlation between U_M and U_D.
    pub u_corr: f64,
    pub outcome: OutcomeLaw,
    /// Share of district-court follow-up cases that are probation revocations.
    pub revocation_share: f64,
    pub max_cases_per_person: usize,
    /// Monte Carlo draws used for the stored true LATE.
    pub oracle_reps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_cases: 50_000,
            n_judges: 200,
            n_districts: 20,
            districts_per_circuit: 2,
            superior_judge_share: 0.25,
            start_year: 1995,
            end_year: 2009,
            burn_in_years: 10,
            felony_share: 0.3,
            covariates: CovariateLaw::default(),
            judges: JudgeLaw::default(),
            selection: Selection::default(),
            u_corr: 0.3,
            outcome: OutcomeLaw::default(),
            revocation_share: 0.15,
            max_cases_per_person: 20,
            oracle_reps: 200_000,
        }
    }
}

fn prob(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} is not a probability")))
    }
}

impl SimConfig {
    pub fn n_circuits(&self) -> usize {
        self.n_districts.div_ceil(self.districts_per_circuit.max(1))
    }

    pub fn n_superior_judges(&self) -> usize {
        (self.n_judges as f64 * self.superior_judge_share).round() as usize
    }

    pub fn n_burn_in_persons(&self) -> usize {
        (self.n_cases as f64 * f64::from(self.burn_in_years) / self.n_years() as f64).round() as usize
    }

    pub fn n_years(&self) -> usize {
        (self.end_year - self.start_year + 1).max(0) as usize
    }

    /// m(x) = 1 + risk_x'(x - E x), centered so its population mean is one.
    pub fn risk_multiplier(&self, x: &Traits) -> f64 {
        let r = &self.outcome.risk_x;
        let c = &self.covariates;
        let f = |b: bool| if b { 1.0 } else { 0.0 };
        1.0 + r.female * (f(x.female) - c.female)
            + r.black * (f(x.black) - c.black)
            + r.hispanic * (f(x.hispanic) - c.hispanic)
            + r.first_time * (f(x.first_time) - c.first_time)
            + r.prior_arrest * (f(x.prior_arrest) - c.prior_arrest)
            + r.felony * (f(x.felony) - self.felony_share)
            + r.young * (f(x.young) - c.young)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cases == 0 || self.n_judges == 0 || self.n_districts == 0 || self.districts_per_circuit == 0 {
            return Err(Error::Config("counts must be positive".into()));
        }
        if self.end_year < self.start_year {
            return Err(Error::Config("end_year precedes start_year".into()));
        }
        let c = &self.covariates;
        for (n, v) in [
            ("felony_share", self.felony_share),
            ("superior_judge_share", self.superior_judge_share),
            ("revocation_share", self.revocation_share),
            ("covariates.female", c.female),
            ("covariates.black", c.black),
            ("covariates.hispanic", c.hispanic),
            ("covariates.first_time", c.first_time),
            ("covariates.prior_arrest", c.prior_arrest),
            ("covariates.sex_offender", c.sex_offender),
            ("covariates.young", c.young),
            ("covariates.private_attorney", c.private_attorney),
            ("covariates.waived_attorney", c.waived_attorney),
        ] {
            prob(n, v)?;
        }
        if c.private_attorney + c.waived_attorney > 1.0 {
            return Err(Error::Config("attorney shares exceed one".into()));
        }
        if !(-1.0..=1.0).contains(&self.u_corr) || !(-1.0..=1.0).contains(&self.judges.corr) {
            return Err(Error::Config("correlations must lie in [-1, 1]".into()));
        }
        if self.judges.sd_m < 0.0 || self.judges.sd_d < 0.0 {
            return Err(Error::Config("judge propensity sds must be non-negative".into()));
        }
        let n_sup = self.n_superior_judges();
        let n_dist = self.n_judges - n_sup;
        if self.felony_share > 0.0 {
            // every circuit needs at least as many judges as it has districts
            let per_circuit = n_sup / self.n_circuits();
            if per_circuit < self.districts_per_circuit.min(self.n_districts) {
                return Err(Error::Config(format!(
                    "infeasible rotation: {per_circuit} superior judges per circuit for {} districts",
                    self.districts_per_circuit
                )));
            }
        }
        if self.felony_share < 1.0 && n_dist < self.n_districts {
            return Err(Error::Config(format!(
                "{n_dist} district judges cannot staff {} districts",
                self.n_districts
            )));
        }
        if self.outcome.kappa.abs() > 1.0 {
            return Err(Error::Config("kappa must lie in [-1, 1]".into()));
        }
        if self.outcome.risk_x.abs_sum() >= 1.0 {
            return Err(Error::Config("risk multiplier coefficients must sum below one in absolute value".into()));
        }
        if self.max_cases_per_person == 0 {
            return Err(Error::Config("max_cases_per_person must be positive".into()));
        }
        Ok(())
    }
}
