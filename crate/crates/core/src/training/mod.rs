//! The training recipe: Adam with weight decay, cosine learning-rate
//! schedule, DropLead augmentation, stratified k-fold cross-validation,
//! threshold search and classification metrics.

pub mod adam;
pub mod droplead;
pub mod folds;
pub mod metrics;
pub mod schedule;
pub mod trainer;

pub use adam::{adam_step, AdamState};
pub use droplead::drop_lead;
pub use folds::{stratified_kfold, FoldPlan, RoundSplit};
pub use metrics::{threshold_grid, threshold_search, ClassMetrics, Confusion, MetricsReport};
pub use schedule::{lr_schedule, TrainConfig};
pub use trainer::{
    batches, decide, evaluate, fit, loss_and_grad, predict_probs, run_cv, run_round, train_epoch,
    CvSummary, EpochStats, RoundResult,
};
