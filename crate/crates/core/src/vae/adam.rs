use serde::{Deserialize, Serialize};

use super::network::VaeParams;
use crate::scalar::Real;

/// Optimizer and schedule settings for VAE training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 100,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: VaeParams<T>,
    pub v: VaeParams<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &VaeParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update over flat slices. `step` counts from 1.
pub fn adam_update<T: Real>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    config: &TrainConfig,
) {
    assert!(step >= 1, "Adam steps are 1-based");
    let b1 = T::lit(config.beta1);
    let b2 = T::lit(config.beta2);
    let lr = T::lit(config.learning_rate);
    let eps = T::lit(config.epsilon);
    let c1 = T::one() - T::lit(config.beta1.powi(step as i32));
    let c2 = T::one() - T::lit(config.beta2.powi(step as i32));
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Applies [`adam_update`] layer by layer.
pub fn adam_step<T: Real>(
    params: &mut VaeParams<T>,
    grads: &VaeParams<T>,
    state: &mut AdamState<T>,
    step: u64,
    config: &TrainConfig,
) {
    let grad_layers = grads.named_layers();
    let AdamState { m, v } = state;
    let layers = params
        .layers_mut()
        .into_iter()
        .zip(grad_layers)
        .zip(m.layers_mut())
        .zip(v.layers_mut());
    for (((p, (_, g)), m), v) in layers {
        adam_update(
            p.weight.as_slice_mut().expect("standard layout"),
            g.weight.as_slice().expect("standard layout"),
            m.weight.as_slice_mut().expect("standard layout"),
            v.weight.as_slice_mut().expect("standard layout"),
            step,
            config,
        );
        adam_update(
            p.bias.as_slice_mut().expect("contiguous"),
            g.bias.as_slice().expect("contiguous"),
            m.bias.as_slice_mut().expect("contiguous"),
            v.bias.as_slice_mut().expect("contiguous"),
            step,
            config,
        );
    }
}
