use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::{Error, Result};
use crate::eval::Grouping;
use crate::model::ModelConfig;
use crate::train::TrainConfig;

/// Input locations. Unset entries default to the layout `synth` writes
/// under the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dem: Option<PathBuf>,
    /// Directory holding `precipitation.csv` and `discharge.csv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catchment: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub targets: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dem: None,
            series: None,
            catchment: None,
            targets: None,
            output: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Std of Gaussian noise added to normalized forecast rainfall.
    pub forecast_noise_std: f64,
    pub noise_seed: u64,
    pub split: Split,
    pub groupings: Vec<Grouping>,
    /// Stations to export temporal attention for; empty means all.
    pub stations: Vec<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            forecast_noise_std: 0.0,
            noise_seed: 0,
            split: Split::Test,
            groupings: Grouping::ALL.to_vec(),
            stations: Vec::new(),
        }
    }
}

/// Everything one invocation needs, as read from a TOML file with the
/// sections `[paths]`, `[model]`, `[train]` and `[eval]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
}

impl RunConfig {
    /// Parses `path`; relative paths inside are taken relative to the
    /// file's directory. Returns the config and the file text.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let p = &mut config.paths;
        for slot in [&mut p.dem, &mut p.series, &mut p.catchment, &mut p.targets].into_iter().flatten() {
            if slot.is_relative() {
                *slot = base.join(&*slot);
            }
        }
        if p.output.is_relative() {
            p.output = base.join(&p.output);
        }
        Ok((config, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn out(&self) -> &Path {
        &self.paths.output
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out().join("data")
    }

    pub fn dem_path(&self) -> PathBuf {
        self.paths.dem.clone().unwrap_or_else(|| self.data_dir().join("dem.asc"))
    }

    pub fn series_dir(&self) -> PathBuf {
        self.paths.series.clone().unwrap_or_else(|| self.data_dir())
    }

    pub fn catchment_path(&self) -> PathBuf {
        self.paths.catchment.clone().unwrap_or_else(|| self.data_dir().join("catchment.csv"))
    }

    pub fn targets_path(&self) -> PathBuf {
        self.paths.targets.clone().unwrap_or_else(|| self.data_dir().join("targets.csv"))
    }

    pub fn graph_path(&self) -> PathBuf {
        self.out().join("graph").join("graph.json")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.out().join("checkpoints")
    }

    pub fn forecast_dir(&self) -> PathBuf {
        self.out().join("forecasts")
    }

    pub fn metrics_dir(&self) -> PathBuf {
        self.out().join("metrics")
    }

    pub fn attention_dir(&self) -> PathBuf {
        self.out().join("attention")
    }
}
