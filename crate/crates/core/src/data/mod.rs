//! Time series ingestion, gap filling, normalization and windowing.

mod impute;
mod norm;
mod series;
mod synth;
mod window;

pub use impute::{impute_upstream, interpolate_downstream, Imputation};
pub use norm::{denormalize, normalize, NormState, NormStates};
pub use series::{format_time, parse_time, SeriesStore};
pub use synth::{reservoir_cascade, synth_basin, SynthBasin};
pub use window::{
    make_windows, sequential_sampler, split_range, Batch, Dataset, Split, WindowSample, NUM_FEATURES,
};
