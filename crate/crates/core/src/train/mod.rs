//! Losses, optimization, metrics and cross-validation.

mod cv;
mod folds;
mod gradcheck;
mod loss;
mod metrics;
mod optim;
mod trainer;

pub use cv::{
    cross_validate, predict_all, stack_targets, validation_split, ConstantPredictor, CvOptions, CvReport, FoldModel,
    NetworkModel,
};
pub use gradcheck::{gradcheck_config, gradcheck_loss, gradcheck_variant};
pub use folds::{make_folds, FoldAssignment, FoldMode};
pub use loss::{cell_pressures, kl_divergence, mse_loss, prior_regularization, total_loss, PriorInputs};
pub use metrics::{compute_metrics, pearson, rmse, Aggregation, ChannelMetrics, MetricsOptions, MetricsReport, Normalizer};
pub use optim::{adamw_step, cosine_lr, AdamState, AdamW};
pub use trainer::{early_stop_point, train, EpochRecord, TrainConfig, TrainOutcome, TrainState, Trainer};
