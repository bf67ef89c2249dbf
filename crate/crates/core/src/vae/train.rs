use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState, TrainConfig};
use super::network::{gradients, VaeArchitecture, VaeParams};
use super::VaeError;
use crate::io::PointCloud;
use crate::scalar::Real;

/// Latent representation of a cloud: one posterior mean per input point.
pub type LatentCloud<T> = PointCloud<T>;

/// Per-epoch means (per sample) of the loss terms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub total: Vec<f64>,
    pub recon: Vec<f64>,
    pub kl: Vec<f64>,
    pub wall_ms: u128,
}

const NOISE_STREAM: u64 = 1;

/// Trains a VAE with shuffled mini-batches and one Adam step per batch.
///
/// Initialization, shuffling and reparameterization noise all derive from
/// `config.seed`, so two runs with the same seed produce identical bits.
pub fn train<T: Real>(
    cloud: &PointCloud<T>,
    arch: &VaeArchitecture,
    config: &TrainConfig,
) -> Result<(VaeParams<T>, TrainHistory), VaeError> {
    validate_config(config)?;
    if cloud.dim() != arch.input_dim {
        return Err(VaeError::Shape(format!(
            "cloud dim {} != architecture input_dim {}",
            cloud.dim(),
            arch.input_dim
        )));
    }
    let started = Instant::now();
    let mut params = VaeParams::init(arch, config.seed)?;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(NOISE_STREAM);

    let n = cloud.n();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    let mut step = 0u64;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut recon, mut kl) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            let x = cloud.points.select(Axis(0), chunk);
            let noise = Array2::from_shape_simple_fn((chunk.len(), arch.latent_dim), || {
                T::lit(StandardNormal.sample(&mut rng))
            });
            let (grads, value) = match gradients(&params, x.view(), noise.view()) {
                Ok(v) => v,
                Err(VaeError::NonFinite(_)) => return Err(VaeError::Diverged { epoch }),
                Err(e) => return Err(e),
            };
            if !value.total.is_finite() {
                return Err(VaeError::Diverged { epoch });
            }
            step += 1;
            adam_step(&mut params, &grads, &mut state, step, config);
            total += value.total.as_f64() * chunk.len() as f64;
            recon += value.recon.as_f64();
            kl += value.kl.as_f64();
        }
        if !params.all_finite() {
            return Err(VaeError::Diverged { epoch });
        }
        let n = n as f64;
        history.total.push(total / n);
        history.recon.push(recon / n);
        history.kl.push(kl / n);
        log::debug!(
            "epoch {epoch}: loss {:.6} (recon {:.6}, kl {:.6})",
            total / n,
            recon / n,
            kl / n
        );
    }
    history.wall_ms = started.elapsed().as_millis();
    Ok((params, history))
}

fn validate_config(config: &TrainConfig) -> Result<(), VaeError> {
    if !(config.learning_rate > 0.0) || config.batch_size == 0 || config.epochs == 0 {
        return Err(VaeError::Config(format!(
            "learning_rate must be > 0, batch_size and epochs >= 1 (got {}, {}, {})",
            config.learning_rate, config.batch_size, config.epochs
        )));
    }
    Ok(())
}

/// Embeds every point as its posterior mean; no sampling, so the result is deterministic.
pub fn embed_dataset<T: Real>(params: &VaeParams<T>, cloud: &PointCloud<T>) -> Result<LatentCloud<T>, VaeError> {
    if cloud.dim() != params.architecture().input_dim {
        return Err(VaeError::Shape(format!(
            "cloud dim {} != architecture input_dim {}",
            cloud.dim(),
            params.architecture().input_dim
        )));
    }
    const BLOCK: usize = 1024;
    let latent_dim = params.architecture().latent_dim;
    let mut points = Array2::zeros((cloud.n(), latent_dim));
    for start in (0..cloud.n()).step_by(BLOCK) {
        let end = (start + BLOCK).min(cloud.n());
        let mu = params.encode_mean(cloud.points.slice(ndarray::s![start..end, ..]));
        points.slice_mut(ndarray::s![start..end, ..]).assign(&mu);
    }
    if points.iter().any(|v: &T| !v.is_finite()) {
        return Err(VaeError::NonFinite("latent"));
    }
    Ok(PointCloud {
        points,
        origin: cloud.origin.clone(),
    })
}
