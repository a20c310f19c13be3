use std::fs;
use std::path::Path;

use regimecast::experiment::PrepareConfig;
use regimecast::models::{ModelKind, Profile, ProfileConfig};
use regimecast::preprocess::ClimatologyPolicy;
use regimecast::regimes::{EofWeighting, KMeansConfig};
use regimecast::synth::WorldConfig;
use regimecast::training::BoConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Read the section `name` of a JSON config file; a missing file argument or
/// section yields the defaults.
pub fn section<T: DeserializeOwned + Default>(path: Option<&Path>, name: &str) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    match doc.get(name) {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| CliError::Validation(format!("{}: section {name:?}: {e}", path.display()))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub winters: usize,
    pub world: WorldConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { winters: 50, world: WorldConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lats: Vec<f64>,
    pub lons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Target grid; `None` keeps the input grid.
    pub grid: Option<Grid>,
    pub rolling_days: usize,
    pub climatology: ClimatologyPolicy,
    /// Keep only extended-winter days after smoothing.
    pub extended_winter: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { grid: None, rolling_days: 7, climatology: ClimatologyPolicy::default(), extended_winter: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EofConfig {
    pub n_eof: usize,
    pub weighting: EofWeighting,
}

impl Default for EofConfig {
    fn default() -> Self {
        Self { n_eof: 14, weighting: EofWeighting::None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ClusterConfig {
    pub eof: EofConfig,
    pub kmeans: KMeansConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicesConfig {
    pub rolling_days: usize,
    pub mjo_threshold: f64,
}

impl Default for IndicesConfig {
    fn default() -> Self {
        let p = PrepareConfig::default();
        Self { rolling_days: p.rolling_days, mjo_threshold: p.mjo_threshold }
    }
}

/// Shared settings of the training commands. Optional fields override the
/// chosen profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelRunConfig {
    pub prepare: PrepareConfig,
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub members: Option<usize>,
    pub hidden: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub mae_epochs: Option<usize>,
}

impl Default for ModelRunConfig {
    fn default() -> Self {
        Self {
            prepare: PrepareConfig::default(),
            models: vec![ModelKind::Persistence, ModelKind::Lstm, ModelKind::IndexLstm, ModelKind::VitLstm],
            seed: 0,
            members: None,
            hidden: None,
            max_epochs: None,
            patience: None,
            mae_epochs: None,
        }
    }
}

impl ModelRunConfig {
    pub fn profile(&self, profile: Profile) -> ProfileConfig {
        let mut p = ProfileConfig::new(profile);
        if let Some(m) = self.members {
            p.members = m;
        }
        if let Some(h) = self.hidden {
            p.lstm_hidden = h;
        }
        if let Some(e) = self.max_epochs {
            p.train.max_epochs = e;
        }
        if let Some(e) = self.patience {
            p.train.patience = e;
        }
        if let Some(e) = self.mae_epochs {
            p.mae_epochs = e;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoCommandConfig {
    pub bo: BoConfig,
    /// Search range of log10 of the learning rate.
    pub log10_lr: (f64, f64),
    pub dropout: (f64, f64),
}

impl Default for BoCommandConfig {
    fn default() -> Self {
        Self { bo: BoConfig::default(), log10_lr: (-4.0, -1.5), dropout: (0.0, 0.5) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrecursorConfig {
    pub percentile: f64,
}

impl Default for PrecursorConfig {
    fn default() -> Self {
        Self { percentile: 90.0 }
    }
}
