//! Experiment orchestration: splits, folds, the configuration grid,
//! synthetic data, checkpoints and report files.

use std::path::PathBuf;

pub mod config;
pub mod io;
pub mod report;
pub mod runner;
pub mod split;
pub mod synth;

pub use config::{Axis, ExperimentConfig, FoldRecord, GridSpec, ResultRow};
pub use io::{
    evaluate_test, load_dataset_dir, load_rows, save_dataset_dir, save_rows, Checkpoint, DatasetDir,
    GridResults,
};
pub use report::{relative_gain, report, stats_tables, summary_text};
pub use runner::{run_config, run_grid, train_fold, ExperimentData, FoldModel, GridFailure};
pub use split::{stratified_kfold, stratified_split, Fold, Split, SplitError};
pub use synth::{synth_generate, SynthError, SynthOutput, SynthSpec};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Data(#[from] crate::data_model::DataError),
    #[error(transparent)]
    Text(#[from] crate::text_embed::TextError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
    #[error(transparent)]
    Train(#[from] crate::gnn::TrainError),
    #[error(transparent)]
    Model(#[from] crate::gnn::ModelError),
    #[error(transparent)]
    Metric(#[from] crate::eval_metrics::MetricError),
    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Json { path: PathBuf, message: String },
    #[error("{0}")]
    Mismatch(String),
}
