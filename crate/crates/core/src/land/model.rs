use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::labels::{propagate, query, resume_query, LabelState, Oracle};
use super::scores::{kde, land_scores, rho_from_forest, DensityForest, LandScores};
use super::LandError;
use crate::graph::{
    diffusion_embedding, kernel_weights, knn_index, markov_matrix, resolve_scales, truncated_spectrum_with,
    DiffusionCoords, EigenConfig, GraphConfig, MarkovGraph, Spectrum,
};
use crate::io::PointCloud;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LandConfig {
    pub graph: GraphConfig,
    pub eigen: EigenConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub sigma: f64,
    pub sigma0: f64,
    pub krylov_dim: usize,
    pub max_residual: f64,
    pub timings: Vec<StageTiming>,
}

impl Diagnostics {
    fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
        log::debug!("{stage}: {:.1} ms", self.timings.last().map_or(0.0, |t| t.ms));
        out
    }

    pub fn total_ms(&self) -> f64 {
        self.timings.iter().map(|t| t.ms).sum()
    }
}

/// Everything LAND derives from a point cloud before any label is known.
#[derive(Debug, Clone)]
pub struct LandModel<T> {
    pub sigma: T,
    pub sigma0: T,
    /// Absent when the model was rebuilt from a stored spectrum.
    pub graph: Option<MarkovGraph<T>>,
    pub spectrum: Spectrum<T>,
    pub coords: DiffusionCoords<T>,
    pub forest: DensityForest<T>,
    pub scores: LandScores<T>,
    pub diagnostics: Diagnostics,
}

impl<T: Real> LandModel<T> {
    pub fn fit(cloud: &PointCloud<T>, config: &LandConfig) -> Result<Self, LandError> {
        let n = cloud.n();
        config.graph.validate(n)?;
        let mut diag = Diagnostics { n, ..Diagnostics::default() };
        let index = diag.time("knn", || knn_index(cloud, config.graph.k))?;
        let (sigma, sigma0) = resolve_scales(&index, &config.graph)?;
        let graph = diag.time("weights", || markov_matrix(kernel_weights(&index, sigma)))?;
        let spectrum = diag.time("spectrum", || {
            truncated_spectrum_with(&graph, config.graph.num_eigs, &config.eigen)
        })?;
        let density = diag.time("density", || kde(&index, sigma0));
        diag.sigma = sigma.as_f64();
        diag.sigma0 = sigma0.as_f64();
        let mut model = Self::from_spectrum_timed(spectrum, density, config.graph.t, diag)?;
        model.sigma = sigma;
        model.sigma0 = sigma0;
        model.graph = Some(graph);
        Ok(model)
    }

    /// Rebuilds the label-independent state from a stored spectrum and density.
    pub fn from_spectrum(spectrum: Spectrum<T>, density: Vec<T>, t: u32) -> Result<Self, LandError> {
        let n = density.len();
        Self::from_spectrum_timed(spectrum, density, t, Diagnostics { n, ..Diagnostics::default() })
    }

    fn from_spectrum_timed(
        spectrum: Spectrum<T>,
        density: Vec<T>,
        t: u32,
        mut diag: Diagnostics,
    ) -> Result<Self, LandError> {
        if spectrum.eigenvectors.nrows() != density.len() {
            return Err(LandError::Length(format!(
                "spectrum has {} rows but density has {} entries",
                spectrum.eigenvectors.nrows(),
                density.len()
            )));
        }
        if t == 0 {
            return Err(LandError::Length("diffusion time t must be >= 1".into()));
        }
        diag.krylov_dim = spectrum.krylov_dim;
        diag.max_residual = spectrum.residuals.iter().map(|r| r.as_f64()).fold(0.0, f64::max);
        let coords = diag.time("diffusion", || diffusion_embedding(&spectrum, t));
        let forest = diag.time("forest", || DensityForest::build(&coords, &density));
        let rho = rho_from_forest(&coords, &forest);
        let scores = diag.time("scores", || land_scores(&density, &rho));
        Ok(Self {
            sigma: T::zero(),
            sigma0: T::zero(),
            graph: None,
            spectrum,
            coords,
            forest,
            scores,
            diagnostics: diag,
        })
    }

    pub fn n(&self) -> usize {
        self.scores.density.len()
    }

    pub fn query(&self, oracle: &mut dyn Oracle, budget: usize) -> Result<LabelState, LandError> {
        query(&self.scores, oracle, budget)
    }

    pub fn resume(&self, state: LabelState, oracle: &mut dyn Oracle) -> Result<LabelState, LandError> {
        resume_query(state, &self.scores, oracle)
    }

    pub fn propagate(&self, state: &LabelState) -> Result<LabelState, LandError> {
        propagate(state, &self.forest, &self.coords)
    }
}

/// Fits the model, queries the top-`budget` points and propagates the answers.
pub fn run_pipeline<T: Real>(
    cloud: &PointCloud<T>,
    config: &LandConfig,
    oracle: &mut dyn Oracle,
    budget: usize,
) -> Result<(LabelState, LandModel<T>), LandError> {
    if budget == 0 {
        return Err(LandError::EmptyBudget);
    }
    if budget > cloud.n() {
        return Err(LandError::BudgetTooLarge { budget, n: cloud.n() });
    }
    let mut model = LandModel::fit(cloud, config)?;
    let mut diag = std::mem::take(&mut model.diagnostics);
    let state = diag.time("query", || model.query(oracle, budget))?;
    let labels = diag.time("propagate", || model.propagate(&state))?;
    model.diagnostics = diag;
    Ok((labels, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::LabelMap;
    use crate::land::GroundTruthOracle;
    use ndarray::Array2;

    fn two_blobs() -> (PointCloud<f64>, LabelMap) {
        let mut pts = Array2::zeros((40, 2));
        let mut labels = vec![0; 40];
        for i in 0..40 {
            let c = if i < 20 { 0.0 } else { 10.0 };
            let a = i as f64 * 0.7;
            pts[[i, 0]] = c + 0.3 * a.cos() * (1.0 + (i % 3) as f64 * 0.2);
            pts[[i, 1]] = 0.3 * a.sin();
            labels[i] = if i < 20 { 1 } else { 2 };
        }
        (PointCloud::new(pts).unwrap(), LabelMap::new(labels).unwrap())
    }

    fn config() -> LandConfig {
        LandConfig {
            graph: GraphConfig { k: 10, num_eigs: 10, t: 5, ..GraphConfig::default() },
            ..LandConfig::default()
        }
    }

    #[test]
    fn empty_budget_is_an_error() {
        let (cloud, truth) = two_blobs();
        let err = run_pipeline(&cloud, &config(), &mut GroundTruthOracle::new(&truth), 0).unwrap_err();
        assert!(err.to_string().contains("empty budget"));
    }

    #[test]
    fn two_blobs_two_queries() {
        let (cloud, truth) = two_blobs();
        let (labels, model) = run_pipeline(&cloud, &config(), &mut GroundTruthOracle::new(&truth), 2).unwrap();
        assert_eq!(labels.y, truth.labels);
        let stages: Vec<&str> = model.diagnostics.timings.iter().map(|t| t.stage.as_str()).collect();
        assert!(stages.contains(&"spectrum") && stages.contains(&"propagate"));
        assert!(model.diagnostics.max_residual <= 1e-10);
    }

    #[test]
    fn rebuilt_model_matches_fitted() {
        let (cloud, _) = two_blobs();
        let fitted = LandModel::fit(&cloud, &config()).unwrap();
        let rebuilt = LandModel::from_spectrum(fitted.spectrum.clone(), fitted.scores.density.clone(), 5).unwrap();
        assert_eq!(rebuilt.scores, fitted.scores);
        assert_eq!(rebuilt.forest, fitted.forest);
    }
}
