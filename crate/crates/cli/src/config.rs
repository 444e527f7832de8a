//! Run configuration: an optional JSON file overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use csiloc::data::SyntheticConfig;
use csiloc::metrics::MetricMode;
use csiloc::models::ModelId;
use csiloc::train::TrainConfig;
use csiloc::{Error, Result};
use serde::{Deserialize, Serialize};

pub const RESOLVED_CONFIG: &str = "config.resolved.json";

/// Input file locations. Unset entries default to the names written by
/// `synth` inside `--data`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub unlabeled: Option<PathBuf>,
    pub labeled: Option<PathBuf>,
    pub positions: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds data generation, splits, initialization and batch order.
    pub seed: u64,
    pub model: Option<ModelId>,
    pub mode: MetricMode,
    pub out: Option<PathBuf>,
    pub data: DataPaths,
    pub pretrained: Option<PathBuf>,
    /// Keep the output ReLU of autoencoder decoders.
    pub final_activation: bool,
    pub unlabeled_split: Vec<f64>,
    pub labeled_split: Vec<f64>,
    pub synthetic: SyntheticConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: None,
            mode: MetricMode::PaperLiteral,
            out: None,
            data: DataPaths::default(),
            pretrained: None,
            final_activation: true,
            unlabeled_split: vec![0.8, 0.2],
            labeled_split: vec![0.9, 0.05, 0.05],
            synthetic: SyntheticConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Propagates the top-level seed and validates the sections in use.
    pub fn resolve(mut self) -> Result<Self> {
        self.synthetic.seed = self.seed;
        self.train.seed = self.seed;
        self.train.validate()?;
        Ok(self)
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| Error::Config("an output directory is required (--out)".into()))
    }

    pub fn model(&self) -> Result<ModelId> {
        self.model.ok_or_else(|| Error::Config("a model is required (--model m1|m2|m3|m4)".into()))
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(RESOLVED_CONFIG), serde_json::to_string_pretty(self).expect("config serializes") + "\n")
    }
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| Error::Io { path: parent.into(), source })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io { path: path.into(), source })
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })
}
