//! Dual-direction training: both translation directions of every batch
//! are scored, their losses summed, and the shared model takes one Adam
//! step on the total.

mod adam;
mod checkpoint;
mod config;
mod dual;
mod trainer;

pub use adam::{adam_update, AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::{atomic_write, read_manifest, Checkpoint, Manifest, TensorEntry, FORMAT_VERSION};
pub use config::{lr_schedule, Precision, TrainConfig, TrainConfigPatch};
pub use dual::{
    clip_global_norm, direction_gradients, dual_gradients, dual_train_step, masked_sparse_ce,
    StepLosses,
};
pub use trainer::{train, EpochRecord, LossHistory, TrainOutcome, Trainer};
