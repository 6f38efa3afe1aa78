//! Objectives for the three model variants, the optimizer, and the
//! early-stopping training loop.

mod adam;
mod loss;
mod trainer;

pub use adam::{adam_step, OptimizerState, DEFAULT_LEARNING_RATE};
pub use loss::{loss_baseline, loss_model1, loss_model2, variant_loss, LossWeights};
pub use trainer::{
    evaluate_loss, frozen_validation_gains, loss_and_grads, read_history_csv, train, write_history_csv,
    HistoryRow, StopReason, TrainConfig, TrainOutcome, Trainer,
};
