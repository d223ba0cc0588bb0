//! Desk-scale lab for adapter training mechanics.
//!
//! A linear 3-class classifier over hashed character trigrams of the
//! rendered QIP text. It trains either all weights (`full`) or a LoRA
//! adapter on a frozen base (`lora`), with class-weighted cross-entropy and
//! an optional reduce-on-plateau learning-rate schedule.

mod checkpoint;
mod features;
mod layer;
mod model;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use features::{FeatureHasher, DEFAULT_FEATURE_DIM};
pub use layer::{forward_adapted, merge, param_count, DenseLayer, LoraAdapter, TrainMode};
pub use model::{grad_check, Classifier, Gradients};
pub use train::{
    train, train_with_base, HistoryEntry, PlateauScheduler, Scheduler, TrainConfig, TrainOutput,
};
