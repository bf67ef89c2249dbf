//! Query selection and label propagation on diffusion coordinates.

mod labels;
mod model;
mod scores;

use thiserror::Error;

use crate::graph::GraphError;

pub use labels::{propagate, query, resume_query, Answer, GroundTruthOracle, LabelState, Oracle, OracleError};
pub use model::{run_pipeline, Diagnostics, LandConfig, LandModel, StageTiming};
pub use scores::{denser, density_order, kde, land_scores, rho_from_forest, rho_t, DensityForest, LandScores};

#[derive(Debug, Error)]
pub enum LandError {
    #[error("empty budget: at least one query is required")]
    EmptyBudget,
    #[error("budget {budget} exceeds the {n} available points")]
    BudgetTooLarge { budget: usize, n: usize },
    #[error("propagation needs at least one labeled point")]
    NoLabels,
    #[error("class {0} is not a valid label")]
    InvalidClass(u32),
    #[error("index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("{0}")]
    Length(String),
    #[error("query interrupted after {} answers: {source}", partial.asked)]
    Oracle {
        partial: Box<LabelState>,
        #[source]
        source: OracleError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}
