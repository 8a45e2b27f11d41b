//! Optimization, checkpoints, the training loop, evaluation and ablations.

mod ablate;
mod checkpoint;
mod config;
mod denoise;
mod optim;
mod trainer;

pub use ablate::{ablate, AblationKind, AblationRow, AblationTable, ABLATION_EPOCHS};
pub use checkpoint::{Checkpoint, CHECKPOINT_SCHEMA_VERSION};
pub use config::{lr_schedule, TrainConfig};
pub use denoise::{denoise_mse, smooth_images, train_denoiser, DenoiseConfig, DenoiseOutcome};
pub use optim::{adamw_step, clip_global_norm, AdamState, AdamW};
pub use trainer::{accuracy, config_hash, evaluate, predict_proba, train, EpochLog, TrainOutcome};
