//! kNN similarity graph, Markov transition matrix, truncated spectrum and
//! diffusion coordinates.

mod diffusion;
mod knn;
mod markov;
mod sparse;
mod spectrum;

use thiserror::Error;

pub use diffusion::{diffusion_distance, diffusion_embedding, DiffusionCoords};
pub use knn::{knn_index, KnnIndex};
pub use markov::{kernel_weights, markov_matrix, resolve_scales, GraphConfig, MarkovGraph, WeightGraph};
pub use sparse::CsrMatrix;
pub use spectrum::{tridiagonal_eigen, truncated_spectrum, truncated_spectrum_with, EigenConfig, Spectrum};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("k = {k} neighbors requires 1 <= k < n = {n}")]
    NeighborCount { k: usize, n: usize },
    #[error("all neighbor distances are zero; kernel scale is undefined")]
    DegenerateScale,
    #[error("vertex {0} has zero degree")]
    IsolatedVertex(usize),
    #[error("eigensolver did not converge for {requested} pairs; residuals {residuals:?}")]
    NoConvergence { requested: usize, residuals: Vec<f64> },
    #[error("{0}")]
    Invalid(String),
}
