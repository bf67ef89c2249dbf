use serde::{Deserialize, Serialize};

use super::knn::KnnIndex;
use super::sparse::CsrMatrix;
use super::GraphError;
use crate::scalar::Real;

/// Graph and diffusion parameters. `None` scales are resolved from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub k: usize,
    pub sigma: Option<f64>,
    pub sigma0: Option<f64>,
    pub num_eigs: usize,
    pub t: u32,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            k: 100,
            sigma: None,
            sigma0: None,
            num_eigs: 100,
            t: 30,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self, n: usize) -> Result<(), GraphError> {
        if self.k == 0 || self.k >= n {
            return Err(GraphError::NeighborCount { k: self.k, n });
        }
        if self.num_eigs == 0 || self.num_eigs > n {
            return Err(GraphError::Invalid(format!("num_eigs {} must be in 1..={n}", self.num_eigs)));
        }
        if self.t == 0 {
            return Err(GraphError::Invalid("diffusion time t must be >= 1".into()));
        }
        for s in [self.sigma, self.sigma0].into_iter().flatten() {
            if !(s > 0.0) || !s.is_finite() {
                return Err(GraphError::Invalid(format!("kernel scale {s} must be positive")));
            }
        }
        Ok(())
    }
}

/// Kernel scale for the graph weights (`sigma`) and for the density estimate (`sigma0`).
///
/// Unset scales default to the mean distance to the k-th neighbor; `sigma0`
/// follows `sigma` when unset.
pub fn resolve_scales<T: Real>(index: &KnnIndex<T>, config: &GraphConfig) -> Result<(T, T), GraphError> {
    let sigma = match config.sigma {
        Some(s) => T::lit(s),
        None => {
            let n = index.n();
            let mean = (0..n).map(|i| index.kth_distance(i)).sum::<T>() / T::from_count(n);
            if !(mean > T::zero()) {
                return Err(GraphError::DegenerateScale);
            }
            mean
        }
    };
    let sigma0 = config.sigma0.map_or(sigma, T::lit);
    Ok((sigma, sigma0))
}

/// Symmetric Gaussian kNN weights and vertex degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGraph<T> {
    pub w: CsrMatrix<T>,
    pub deg: Vec<T>,
}

impl<T: Real> WeightGraph<T> {
    /// Wraps an explicit symmetric non-negative weight matrix.
    pub fn from_weights(w: CsrMatrix<T>) -> Result<Self, GraphError> {
        if !w.is_symmetric() {
            return Err(GraphError::Invalid("weight matrix is not symmetric".into()));
        }
        if w.values().iter().any(|&v| v < T::zero() || !v.is_finite()) {
            return Err(GraphError::Invalid("weights must be finite and non-negative".into()));
        }
        let deg = w.row_sums();
        Ok(Self { w, deg })
    }

    pub fn n(&self) -> usize {
        self.w.n()
    }
}

/// `W_ij = exp(-|x_i - x_j|^2 / sigma^2)` on kNN edges, symmetrized by `max(W, W^T)`.
pub fn kernel_weights<T: Real>(index: &KnnIndex<T>, sigma: T) -> WeightGraph<T> {
    let n = index.n();
    let inv = T::one() / (sigma * sigma);
    let mut triplets = Vec::with_capacity(2 * n * index.k());
    for i in 0..n {
        for (&j, &d2) in index.neighbors(i).iter().zip(index.squared_distances(i)) {
            let w = (-d2 * inv).exp();
            triplets.push((i, j, w));
            triplets.push((j, i, w));
        }
    }
    let w = CsrMatrix::from_triplets_max(n, triplets);
    let deg = w.row_sums();
    WeightGraph { w, deg }
}

/// Weights, degrees and the row-stochastic transition matrix `P = D^-1 W`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovGraph<T> {
    pub w: CsrMatrix<T>,
    pub deg: Vec<T>,
    pub p: CsrMatrix<T>,
}

impl<T: Real> MarkovGraph<T> {
    pub fn n(&self) -> usize {
        self.w.n()
    }
}

pub fn markov_matrix<T: Real>(graph: WeightGraph<T>) -> Result<MarkovGraph<T>, GraphError> {
    if let Some(vertex) = graph.deg.iter().position(|&d| !(d > T::zero())) {
        return Err(GraphError::IsolatedVertex(vertex));
    }
    let mut values = Vec::with_capacity(graph.w.nnz());
    for i in 0..graph.n() {
        let d = graph.deg[i];
        values.extend(graph.w.row(i).1.iter().map(|&v| v / d));
    }
    let p = graph.w.with_values(values);
    Ok(MarkovGraph { w: graph.w, deg: graph.deg, p })
}
