//! Cross-validated training, metrics and ablations.

mod ablation;
mod metrics;
mod splits;
mod train;

pub use ablation::{
    ablate, by_name, experiments_for_axis, plot_f1, trend_check, AblationAxis, ComparisonTable,
    Experiment, TrendCheck, TrendStatus,
};
pub use metrics::{evaluate, Averaging, MetricsReport, Prf};
pub use splits::{assert_no_leakage, make_splits, FoldSplit};
pub use train::{
    evaluate_ids, predict, run_cv, train_fold, validation_split, Adam, CvOutcome, EpochRecord,
    InputTable, TrainConfig, TrainHistory, TrainedFold, BATCH_SIZES,
};
