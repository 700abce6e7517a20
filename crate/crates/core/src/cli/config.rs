//! JSON config file with flat per-command sections; command-line flags
//! override file values. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub transfer: TransferSection,
    #[serde(default, rename = "cross-train")]
    pub cross_train: CrossTrainSection,
    #[serde(default)]
    pub inspect: InspectSection,
    #[serde(default)]
    pub spectral: SpectralSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("bad config file {}: {e}", path.display()))
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub data: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub spec: Option<String>,
    pub lambda: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub max_iters: Option<usize>,
    pub subsample: Option<usize>,
    pub pool_rounds: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub data: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub model: Option<PathBuf>,
    pub split: Option<String>,
    pub limit: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub policy: Option<String>,
    pub grid: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSection {
    pub data: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub models: Option<Vec<PathBuf>>,
    pub split: Option<String>,
    pub limit: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossTrainSection {
    pub data: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub seed: Option<u64>,
    pub limit: Option<usize>,
    pub out: Option<PathBuf>,
    pub arch_a: Option<String>,
    pub arch_b: Option<String>,
    pub max_iters: Option<usize>,
    pub amplify_literal: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InspectSection {
    pub data: Option<PathBuf>,
    pub synthetic: Option<usize>,
    pub model: Option<PathBuf>,
    pub layer: Option<usize>,
    pub rows: Option<usize>,
    pub topk: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    pub model: Option<PathBuf>,
    pub conv_spec: Option<PathBuf>,
    pub grid_points: Option<usize>,
    pub plain_norms: Option<bool>,
    pub probe_samples: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Flag-over-file resolution for optional values.
pub fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

/// A value the command cannot run without.
pub fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("{what} must be given (flag or config file)")))
}
