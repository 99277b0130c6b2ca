//! CCC loss, AdamW, warmup schedule and the epoch loop.

mod config;
mod loss;
mod optimizer;
mod trainer;

pub use config::{lr_schedule, TrainConfig};
pub use loss::{ccc_loss, ccc_loss_value, CccLoss, LossOutcome};
pub use optimizer::{clip_grad_norm, AdamW, AdamWConfig};
pub use trainer::{
    evaluate_videos, fit, fit_from, predict_sequence, EpochLog, FitResult, Trainer,
    TRAIN_LOG_HEADER,
};
