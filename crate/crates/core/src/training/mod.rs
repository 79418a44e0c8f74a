//! Objective, optimizer and the epoch loop.

mod adam;
mod loss;
mod train;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use loss::{multilabel_xent, PROB_EPS};
pub use train::{task_examples, train, EpochRecord, TrainConfig, TrainReport, EARLY_STOP_PATIENCE};
