use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::overall_accuracy;
use super::ExperimentError;
use crate::io::LabelMap;
use crate::land::{LabelState, LandModel};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Propagated labels of the first trial.
    #[serde(skip)]
    pub first_labels: Vec<u32>,
}

/// `budget` indices drawn uniformly without replacement from the truth-labeled points.
pub fn random_queries<R: Rng + ?Sized>(truth: &LabelMap, budget: usize, rng: &mut R) -> Result<Vec<usize>, ExperimentError> {
    let labeled = truth.labeled_indices();
    if budget == 0 || budget > labeled.len() {
        return Err(ExperimentError::Config(format!(
            "random baseline budget {budget} must be in 1..={}",
            labeled.len()
        )));
    }
    Ok(sample(rng, labeled.len(), budget).into_iter().map(|k| labeled[k]).collect())
}

/// Random-query baseline: same propagation as LAND, queries drawn at random.
pub fn random_baseline<T: Real>(
    model: &LandModel<T>,
    truth: &LabelMap,
    budget: usize,
    seed: u64,
    trials: usize,
) -> Result<BaselineStats, ExperimentError> {
    if trials == 0 {
        return Err(ExperimentError::Config("random baseline needs at least one trial".into()));
    }
    if truth.len() != model.n() {
        return Err(ExperimentError::Length {
            predicted: model.n(),
            truth: truth.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accuracies = Vec::with_capacity(trials);
    let mut first_labels = Vec::new();
    for trial in 0..trials {
        let picks = random_queries(truth, budget, &mut rng)?;
        let answers: Vec<(usize, u32)> = picks.iter().map(|&i| (i, truth.labels[i])).collect();
        let state = LabelState::from_answers(truth.len(), &answers)?;
        let labels = model.propagate(&state)?;
        accuracies.push(overall_accuracy(&labels.y, truth)?);
        if trial == 0 {
            first_labels = labels.y;
        }
    }
    let mean = accuracies.iter().sum::<f64>() / trials as f64;
    let min = accuracies.iter().copied().fold(f64::INFINITY, f64::min);
    let max = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BaselineStats {
        accuracies,
        mean,
        min,
        max,
        first_labels,
    })
}
