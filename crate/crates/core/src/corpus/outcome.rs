//! Recidivism outcome columns built from later cases of the same person.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};

use super::record::{CaseRecord, OffenseGroup};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    Cumulative,
    Window,
    ExcludeViolations,
    FailProbation,
    OffenseType(OffenseGroup),
    FutureFelony,
    FutureMisdemeanor,
    NFutureCrimes,
    FutureSentenceLength,
    FutureActive,
}

impl fmt::Display for OutcomeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeMode::Cumulative => f.write_str("cumulative"),
            OutcomeMode::Window => f.write_str("window"),
            OutcomeMode::ExcludeViolations => f.write_str("exclude_violations"),
            OutcomeMode::FailProbation => f.write_str("fail_probation"),
            OutcomeMode::OffenseType(g) => write!(f, "offense_type:{g}"),
            OutcomeMode::FutureFelony => f.write_str("future_felony"),
            OutcomeMode::FutureMisdemeanor => f.write_str("future_misdemeanor"),
            OutcomeMode::NFutureCrimes => f.write_str("n_future_crimes"),
            OutcomeMode::FutureSentenceLength => f.write_str("future_sentence_length"),
            OutcomeMode::FutureActive => f.write_str("future_active"),
        }
    }
}

impl FromStr for OutcomeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(g) = s.strip_prefix("offense_type:") {
            return Ok(OutcomeMode::OffenseType(g.parse()?));
        }
        Ok(match s {
            "cumulative" => OutcomeMode::Cumulative,
            "window" => OutcomeMode::Window,
            "exclude_violations" => OutcomeMode::ExcludeViolations,
            "fail_probation" => OutcomeMode::FailProbation,
            "future_felony" => OutcomeMode::FutureFelony,
            "future_misdemeanor" => OutcomeMode::FutureMisdemeanor,
            "n_future_crimes" => OutcomeMode::NFutureCrimes,
            "future_sentence_length" => OutcomeMode::FutureSentenceLength,
            "future_active" => OutcomeMode::FutureActive,
            _ => return Err(Error::Config(format!("unknown outcome mode `{s}`"))),
        })
    }
}

fn shift_years(d: NaiveDate, years: u32) -> NaiveDate {
    d.checked_add_months(Months::new(12 * years)).unwrap_or(NaiveDate::MAX)
}

/// Outcome per case; `None` marks rows out of the sample (censored, or, for
/// offense-type outcomes, recidivists whose next crime is of another group).
///
/// Only cases strictly after the focal disposition date count. A case enters
/// the horizon-`h` sample only if `h` full years of follow-up fit before the
/// last disposition date in the table.
pub fn build_outcome(cases: &[CaseRecord], mode: OutcomeMode, horizon_years: u32) -> Result<Vec<Option<f64>>> {
    if horizon_years == 0 {
        return Err(Error::Config("outcome horizon must be at least one year".into()));
    }
    let Some(data_end) = cases.iter().map(|c| c.disposition_date).max() else {
        return Ok(Vec::new());
    };
    let mut by_person: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, c) in cases.iter().enumerate() {
        by_person.entry(c.person_id.as_str()).or_default().push(i);
    }
    for rows in by_person.values_mut() {
        rows.sort_by(|&a, &b| {
            cases[a]
                .disposition_date
                .cmp(&cases[b].disposition_date)
                .then_with(|| cases[a].case_id.cmp(&cases[b].case_id))
        });
    }

    let out = cases
        .iter()
        .map(|c| {
            let end = shift_years(c.disposition_date, horizon_years);
            if end > data_end {
                return None;
            }
            let start = if mode == OutcomeMode::Window {
                shift_years(c.disposition_date, horizon_years - 1)
            } else {
                c.disposition_date
            };
            let rows = &by_person[c.person_id.as_str()];
            let later = rows
                .iter()
                .map(|&j| &cases[j])
                .filter(|o| o.disposition_date > c.disposition_date && o.disposition_date <= end);
            let crimes = || later.clone().filter(|o| !o.probation_violation_case);
            let ind = |b: bool| Some(if b { 1.0 } else { 0.0 });
            match mode {
                OutcomeMode::Cumulative => ind(later.clone().next().is_some()),
                OutcomeMode::Window => ind(later.clone().any(|o| o.disposition_date > start)),
                OutcomeMode::ExcludeViolations => ind(crimes().next().is_some()),
                OutcomeMode::FailProbation => ind(later.clone().any(|o| o.probation_violation_case)),
                OutcomeMode::OffenseType(g) => match crimes().next() {
                    None => Some(0.0),
                    Some(o) if o.offense_group == g => Some(1.0),
                    Some(_) => None,
                },
                OutcomeMode::FutureFelony => ind(crimes().any(|o| o.felony)),
                OutcomeMode::FutureMisdemeanor => ind(crimes().any(|o| !o.felony)),
                OutcomeMode::NFutureCrimes => Some(crimes().count() as f64),
                OutcomeMode::FutureSentenceLength => Some(crimes().map(|o| o.sentence_days).sum()),
                OutcomeMode::FutureActive => ind(crimes().any(|o| o.active_sentence)),
            }
        })
        .collect();
    Ok(out)
}
