//! Effects by subgroup, with instruments reused or rebuilt per group.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CaseRecord;
use crate::error::{Error, Result};
use crate::ivcore::frame::{fit_model, Extras, ModelSpec};
use crate::ivcore::{build_instrument, FitResult, InstrumentSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSpec {
    pub split_key: String,
    pub model: ModelSpec,
    /// Instrument columns of `model` and how to rebuild them.
    pub instruments: BTreeMap<String, InstrumentSpec>,
    /// Rebuild each instrument inside the subgroup instead of reusing the global one.
    pub rebuild: bool,
    pub min_n: usize,
}

impl SubgroupSpec {
    pub fn new(split_key: &str, model: ModelSpec) -> SubgroupSpec {
        SubgroupSpec { split_key: split_key.into(), model, instruments: BTreeMap::new(), rebuild: false, min_n: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SubgroupOutcome {
    Fit(Box<FitResult>),
    Skipped { n: usize, note: String },
}

impl SubgroupOutcome {
    pub fn fit(&self) -> Option<&FitResult> {
        match self {
            SubgroupOutcome::Fit(f) => Some(f),
            SubgroupOutcome::Skipped { .. } => None,
        }
    }
}

pub fn subgroup_effects(cases: &[CaseRecord], extras: &Extras, spec: &SubgroupSpec) -> Result<BTreeMap<String, SubgroupOutcome>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in cases.iter().enumerate() {
        let k = c.key(&spec.split_key).ok_or_else(|| Error::MissingColumn(spec.split_key.clone()))?;
        groups.entry(k).or_default().push(i);
    }
    let results: Vec<(String, Result<SubgroupOutcome>)> = groups
        .into_par_iter()
        .map(|(k, rows)| {
            let out = (|| {
                if rows.len() < spec.min_n {
                    return Ok(SubgroupOutcome::Skipped {
                        n: rows.len(),
                        note: format!("{} cases, below the minimum of {}", rows.len(), spec.min_n),
                    });
                }
                let sub: Vec<CaseRecord> = rows.iter().map(|&i| cases[i].clone()).collect();
                let mut ex: Extras = extras.iter().map(|(n, v)| (n.clone(), rows.iter().map(|&i| v[i]).collect())).collect();
                if spec.rebuild {
                    for (name, ispec) in &spec.instruments {
                        ex.insert(name.clone(), build_instrument(&sub, ispec)?.values());
                    }
                }
                Ok(SubgroupOutcome::Fit(Box::new(fit_model(&sub, &ex, &spec.model)?)))
            })();
            (k, out)
        })
        .collect();
    let mut map = BTreeMap::new();
    for (k, r) in results {
        map.insert(k, r?);
    }
    Ok(map)
}
