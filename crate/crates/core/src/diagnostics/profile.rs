//! Effects by recidivism horizon.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_outcome, CaseRecord, OutcomeMode};
use crate::error::{Error, Result};
use crate::ivcore::frame::{fit_model, Extras, ModelSpec};
use crate::ivcore::FitResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    /// Any new case within h years.
    Cumulative,
    /// A new case in year h only.
    Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub model: ModelSpec,
    pub mode: ProfileMode,
    pub max_horizon: u32,
    /// Keep only cases disposed in or before this year, so every horizon uses one sample.
    pub balanced_through: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult {
    pub horizon: u32,
    pub fit: Option<FitResult>,
    pub note: Option<String>,
    /// Effect on the first regressor as a percent of the horizon's outcome mean.
    pub pct_of_mean: Option<f64>,
}

/// `all_cases` is the full table used to find later cases; `analysis` lists
/// the estimation rows and `extras` is aligned with them.
pub fn time_profile(all_cases: &[CaseRecord], analysis: &[usize], extras: &Extras, spec: &ProfileSpec) -> Result<Vec<HorizonResult>> {
    let rows: Vec<usize> = analysis
        .iter()
        .copied()
        .filter(|&i| spec.balanced_through.is_none_or(|y| all_cases[i].year <= y))
        .collect();
    let positions: Vec<usize> = analysis
        .iter()
        .enumerate()
        .filter(|(_, &i)| spec.balanced_through.is_none_or(|y| all_cases[i].year <= y))
        .map(|(p, _)| p)
        .collect();
    let sub: Vec<CaseRecord> = rows.iter().map(|&i| all_cases[i].clone()).collect();
    let base: Extras = extras.iter().map(|(n, v)| (n.clone(), positions.iter().map(|&p| v[p]).collect())).collect();
    let mode = match spec.mode {
        ProfileMode::Cumulative => OutcomeMode::Cumulative,
        ProfileMode::Window => OutcomeMode::Window,
    };
    (1..=spec.max_horizon)
        .into_par_iter()
        .map(|h| {
            let y = build_outcome(all_cases, mode, h)?;
            let name = format!("recid_{}_{h}y", if mode == OutcomeMode::Cumulative { "cum" } else { "win" });
            let mut ex = base.clone();
            ex.insert(name.clone(), rows.iter().map(|&i| y[i].unwrap_or(f64::NAN)).collect());
            let model = ModelSpec { outcome: name, ..spec.model.clone() };
            match fit_model(&sub, &ex, &model) {
                Ok(fit) => {
                    let pct = fit.coef.first().map(|b| 100.0 * b / fit.outcome_mean);
                    Ok(HorizonResult { horizon: h, fit: Some(fit), note: None, pct_of_mean: pct })
                }
                Err(Error::EmptySample) => {
                    Ok(HorizonResult { horizon: h, fit: None, note: Some("no uncensored cases".into()), pct_of_mean: None })
                }
                Err(e) => Err(e),
            }
        })
        .collect()
}
