//! Masked loss, gradient all-reduce, data-parallel training and checkpoints.

mod checkpoint;
mod loss;
mod trainer;

pub use checkpoint::{checkpoint_load, checkpoint_save, write_history, Checkpoint};
pub use loss::{allreduce_average, compute_bundle, evaluate_loss, masked_loss, GradientBundle};
pub use trainer::{epoch_schedule, train, train_from, worker_share, EpochRecord, TrainConfig, TrainOutcome};
