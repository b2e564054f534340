use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Relation;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub t_in: usize,
    pub t_out: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub hidden: usize,
    /// Number of most recent steps each query may attend to, itself included.
    pub attn_window: usize,
    pub dropout: f64,
    pub relations: Vec<Relation>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            t_in: 72,
            t_out: 72,
            d_model: 32,
            num_heads: 2,
            hidden: 32,
            attn_window: 24,
            dropout: 0.1,
            relations: vec![Relation::Flow, Relation::Catchment],
        }
    }
}

impl ModelConfig {
    /// Default configuration with `hidden` used for both widths.
    pub fn with_width(hidden: usize, num_heads: usize, t_in: usize, t_out: usize) -> Self {
        Self {
            t_in,
            t_out,
            d_model: hidden,
            num_heads,
            hidden,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if self.t_in == 0 || self.t_out == 0 {
            return fail("window lengths must be positive".into());
        }
        if self.num_heads == 0 || !self.d_model.is_multiple_of(self.num_heads) || !self.hidden.is_multiple_of(self.num_heads) {
            return fail(format!(
                "d_model {} and hidden {} must both divide into {} heads",
                self.d_model, self.hidden, self.num_heads
            ));
        }
        if !self.d_model.is_multiple_of(2) {
            return fail(format!("d_model {} must be even", self.d_model));
        }
        if self.attn_window == 0 {
            return fail("attention window must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !self.relations.contains(&Relation::Flow) {
            return fail("the flow relation is required".into());
        }
        Ok(())
    }

    pub fn uses_catchment(&self) -> bool {
        self.relations.contains(&Relation::Catchment)
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.num_heads
    }
}
