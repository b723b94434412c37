//! Subcommand configs and file loading.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use leniency_core::cba::{default_effects, CostModel, Effects};
use leniency_core::corpus::record::default_controls;
use leniency_core::corpus::{standard_funnel, Restriction, RuleSet, Schema};
use leniency_core::ddml::DdmlSpec;
use leniency_core::diagnostics::{ProfileMode, ProfileSpec, UpmSpec};
use leniency_core::hdfe::FeSpec;
use leniency_core::ivcore::{ols_version, FrameSpec, ModelSpec};
use leniency_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub schema: Schema,
    pub rules: RuleSet,
    pub funnel: Vec<Restriction>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { schema: Schema::default(), rules: RuleSet::default(), funnel: standard_funnel() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledModel {
    pub label: String,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateConfig {
    pub frame: FrameSpec,
    pub models: Vec<LabeledModel>,
    /// Coefficients shown in the table.
    pub rows: Vec<String>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        let iv = ModelSpec::default();
        EstimateConfig {
            frame: FrameSpec::default(),
            models: vec![
                LabeledModel { label: "OLS".into(), model: ols_version(&iv) },
                LabeledModel { label: "IV".into(), model: iv },
            ],
            rows: vec!["mht".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnoseConfig {
    pub frame: FrameSpec,
    pub treatment: String,
    pub instrument: String,
    pub controls: Vec<String>,
    pub fe: FeSpec,
    pub cluster: String,
    /// Judges with fewer cases get no dummy in the predicted-vs-actual test.
    pub pva_min_cases: usize,
    pub upm: UpmSpec,
    pub profile: Option<ProfileSpec>,
    pub subgroups: Vec<String>,
    pub subgroup_min_n: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            frame: FrameSpec::default(),
            treatment: "mht".into(),
            instrument: "z_mht".into(),
            controls: default_controls(),
            fe: FeSpec::court_time(),
            cluster: leniency_core::ivcore::FE_CELL.into(),
            pva_min_cases: 10,
            upm: UpmSpec::default(),
            profile: Some(ProfileSpec { model: ModelSpec::default(), mode: ProfileMode::Cumulative, max_horizon: 5, balanced_through: None }),
            subgroups: vec!["female".into(), "felony".into()],
            subgroup_min_n: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DdmlConfig {
    pub frame: FrameSpec,
    pub ddml: DdmlSpec,
}

/// Cost file: the cost model plus an optional `[effects]` table of
/// per-group effects; the default effects are used when it is absent.
pub struct CbaConfig {
    pub model: CostModel,
    pub effects: Effects,
}

pub fn parse_cba(text: &str) -> Result<CbaConfig> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let effects = match table.remove("effects") {
        Some(v) => v.try_into().map_err(|e: toml::de::Error| Error::Config(format!("effects: {e}")))?,
        None => default_effects(),
    };
    let model = CostModel::from_toml(&toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?)?;
    Ok(CbaConfig { model, effects })
}

pub fn cba_defaults() -> String {
    let mut t: toml::Table = toml::from_str(&CostModel::default().to_toml()).expect("default cost model");
    let effects: BTreeMap<String, toml::Value> = default_effects()
        .into_iter()
        .map(|(g, e)| (g.as_str().to_string(), toml::Value::try_from(e).expect("effect serializes")))
        .collect();
    t.insert("effects".into(), toml::Value::try_from(effects).expect("effects serialize"));
    toml::to_string(&t).expect("cost file serializes")
}

/// Resolve a config path: as given, then under the config directory.
pub fn resolve(path: &Path, dir: Option<&Path>) -> Result<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if let Some(d) = dir {
        let p = d.join(path);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::Config(format!("config file `{}` not found", path.display())))
}

pub fn read_text(path: Option<&Path>, dir: Option<&Path>) -> Result<Option<String>> {
    match path {
        None => Ok(None),
        Some(p) => Ok(Some(std::fs::read_to_string(resolve(p, dir)?)?)),
    }
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>, dir: Option<&Path>) -> Result<T> {
    match read_text(path, dir)? {
        None => Ok(T::default()),
        Some(text) => toml::from_str(&text).map_err(|e| Error::Config(e.to_string())),
    }
}
