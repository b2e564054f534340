//! The forecasting network: temporal encoder, graph-attention GRU branches,
//! branch fusion and the discharge head.

mod cell;
mod config;
mod dropout;
mod encoder;
mod forward;
mod gat;
mod state;

pub use cell::{fuse_branches, gru_gat_step, CellOutput};
pub use config::ModelConfig;
pub use dropout::DropoutStream;
pub use encoder::{positional_encoding, temporal_encode};
pub use forward::{
    forward_batch, model_forward, predict, predict_batch, AttentionRecord, ForecastNoise, Forward, ForwardOptions,
    ModelGraphs,
};
pub use gat::{gat_forward, GatOutput, MessageGraph};
pub use state::{init_state, ModelState};
