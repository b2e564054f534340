use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Min and max of one channel after `log1p`, fit on training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormState {
    pub min: f64,
    pub max: f64,
}

impl NormState {
    /// Fits over `raw` after the log transform. Non-finite entries are skipped.
    pub fn fit<'a>(raw: impl IntoIterator<Item = &'a f64>) -> Result<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &x in raw {
            if x.is_finite() {
                let z = log_transform(x);
                min = min.min(z);
                max = max.max(z);
            }
        }
        if !min.is_finite() {
            return Err(Error::invalid("no finite values to fit normalization"));
        }
        if max <= min {
            return Err(Error::ConstantChannel(min));
        }
        Ok(Self { min, max })
    }

    pub fn apply(&self, raw: f64) -> f64 {
        ((log_transform(raw) - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }

    pub fn invert(&self, norm: f64) -> f64 {
        (norm * (self.max - self.min) + self.min).exp_m1().max(0.0)
    }
}

fn log_transform(x: f64) -> f64 {
    x.max(0.0).ln_1p()
}

/// `log1p(max(raw, 0))` scaled to `[0, 1]`. Without a state one is fit on
/// `raw`; with one, values beyond the fitted range are clamped.
pub fn normalize(raw: &[f64], state: Option<&NormState>) -> Result<(Vec<f64>, NormState)> {
    let state = match state {
        Some(s) => *s,
        None => NormState::fit(raw)?,
    };
    Ok((raw.iter().map(|&x| state.apply(x)).collect(), state))
}

/// Inverse of [`normalize`], floored at zero.
pub fn denormalize(norm: &[f64], state: &NormState) -> Vec<f64> {
    norm.iter().map(|&z| state.invert(z)).collect()
}

/// Per-channel states for a dataset, persisted next to checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStates {
    pub precipitation: NormState,
    pub discharge: NormState,
}

impl NormStates {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}
