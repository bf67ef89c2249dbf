//! Accuracy metrics, the random-query baseline, budget sweeps and report files.

mod baseline;
mod metrics;
mod report;
mod sweep;

use thiserror::Error;

use crate::io::NpyError;
use crate::land::LandError;

pub use baseline::{random_baseline, random_queries, BaselineStats};
pub use metrics::{confusion_matrix, overall_accuracy, Confusion};
pub use report::{emit_report, read_results_csv, CsvRow, EmittedFiles};
pub use sweep::{budget_sweep, median, Aggregate, Arm, CellResult, FitRecord, SweepConfig, SweepReport, VaeSettings};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("prediction has {predicted} entries but ground truth has {truth}")]
    Length { predicted: usize, truth: usize },
    #[error("ground truth has no labeled pixels to evaluate")]
    DisjointSupport,
    #[error("prediction {label} at index {index} is outside 1..={classes}")]
    LabelOutOfRange { index: usize, label: u32, classes: usize },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Land(#[from] LandError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Npy(#[from] NpyError),
}
