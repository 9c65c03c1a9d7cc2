//! Losses, the RAdam with Lookahead optimizer, early stopping and the
//! per-basin training loop.

mod early;
mod loss;
mod optim;
mod trainer;

pub use early::{early_stopping, Decision, EarlyStopping, IMPROVEMENT_TOLERANCE};
pub use loss::{
    mse_loss, mse_loss_var, quantile_loss, quantile_loss_per_level, quantile_loss_var, LossKind,
};
pub use optim::{OptimizerConfig, Ranger};
pub use trainer::{
    batch_loss, epoch_batches, evaluate_loss, optimization_step, train, uses_unit_target,
    EpochRecord, StopReason, TrainConfig, TrainingReport,
};
