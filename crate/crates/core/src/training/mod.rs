//! Optimizer, schedule, data pipeline, checkpoints and the training loop.

mod augment;
mod checkpoint;
mod dataset;
mod optim;
mod schedule;
mod trainer;

pub use augment::{
    augment, crop_at, flip_horizontal, flip_vertical, resize_bilinear, rotate90, transpose, AugmentPlan, SCALE_RANGE,
};
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use dataset::{load_pairs, synthetic_pairs, ImagePair};
pub use optim::{adamw_step, AdamW, OptimState};
pub use schedule::cosine_lr;
pub use trainer::{epoch_batches, sample_seed, train, EpochLog, TrainConfig, TrainOutcome};
