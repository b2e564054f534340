use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::{EpochRecord, TrainConfig};
use crate::data::NormStates;
use crate::error::{Error, Result};
use crate::model::{init_state, ModelConfig, ModelState};

const PARAMS_STEM: &str = "params";
const NORM_FILE: &str = "norm.json";
const META_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    model: ModelConfig,
    train: TrainConfig,
    epoch: usize,
    station_ids: Vec<String>,
}

/// Everything needed to forecast with a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: ModelState,
    pub norm: NormStates,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Epoch the parameters were taken from.
    pub epoch: usize,
    pub station_ids: Vec<String>,
}

/// Writes `params.json`, `params.bin`, `norm.json` and `checkpoint.json`
/// into `dir`.
pub fn checkpoint_save(dir: &Path, checkpoint: &Checkpoint) -> Result<()> {
    checkpoint.state.save(dir, PARAMS_STEM)?;
    checkpoint.norm.save(&dir.join(NORM_FILE))?;
    let meta = Meta {
        model: checkpoint.model.clone(),
        train: checkpoint.train.clone(),
        epoch: checkpoint.epoch,
        station_ids: checkpoint.station_ids.clone(),
    };
    let path = dir.join(META_FILE);
    let text = serde_json::to_string_pretty(&meta).expect("checkpoint metadata serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads a checkpoint and checks its parameters against the layout its
/// model configuration implies.
pub fn checkpoint_load(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let state = ModelState::load(dir, PARAMS_STEM)?;
    let norm = NormStates::load(&dir.join(NORM_FILE))?;
    let expected = init_state(&meta.model, 0).map_err(|e| Error::Checkpoint(format!("model configuration: {e}")))?;
    expected
        .check_aligned(&state)
        .map_err(|e| Error::Checkpoint(format!("parameters do not fit the model configuration: {e}")))?;
    if !state.is_finite() {
        return Err(Error::Checkpoint("non-finite parameter values".into()));
    }
    Ok(Checkpoint {
        state,
        norm,
        model: meta.model,
        train: meta.train,
        epoch: meta.epoch,
        station_ids: meta.station_ids,
    })
}

/// `epoch,train_loss,val_loss,seconds`.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    for r in history {
        w.serialize(r).map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
