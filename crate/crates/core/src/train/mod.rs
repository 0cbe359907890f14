//! Loss, optimiser, training loop, metrics and attention export.

pub mod adam;
pub mod export;
mod joint;
pub mod loss;
pub mod metrics;
pub mod plot;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use export::{export_attention, rank_patches, read_ranking, write_ranking, RankedPatch};
pub use joint::{ImageBag, JointModel};
pub use loss::{bag_loss, multi_task_loss};
pub use metrics::{ConfusionMatrix, MetricsReport, TaskMetrics};
pub use trainer::{
    evaluate, evaluate_dataset, mean_loss, train, train_bags, write_history, EpochRecord, Network,
    TrainConfig, TrainOutcome, Traced,
};
