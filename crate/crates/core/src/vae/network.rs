//! Fully connected VAE: ReLU encoder trunk, affine mean and log-variance heads,
//! ReLU decoder trunk, affine output layer.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::VaeError;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaeArchitecture {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl VaeArchitecture {
    /// Mirror-image architecture: the decoder uses the encoder widths reversed.
    pub fn symmetric(input_dim: usize, hidden: Vec<usize>, latent_dim: usize) -> Self {
        let decoder_hidden = hidden.iter().rev().copied().collect();
        Self {
            input_dim,
            encoder_hidden: hidden,
            decoder_hidden,
            latent_dim,
        }
    }

    /// Three hidden layers of 128 units on each side and a 40-dimensional latent space.
    pub fn default_for(input_dim: usize) -> Self {
        Self::symmetric(input_dim, vec![128, 128, 128], 40)
    }

    pub fn validate(&self) -> Result<(), VaeError> {
        let widths = std::iter::once(self.input_dim)
            .chain(self.encoder_hidden.iter().copied())
            .chain(self.decoder_hidden.iter().copied())
            .chain(std::iter::once(self.latent_dim));
        for w in widths {
            if w == 0 {
                return Err(VaeError::Architecture("all layer widths must be >= 1".into()));
            }
        }
        if self.latent_dim >= self.input_dim {
            return Err(VaeError::Architecture(format!(
                "latent_dim {} must be smaller than input_dim {}",
                self.latent_dim, self.input_dim
            )));
        }
        Ok(())
    }
}

/// Affine layer `y = x W^T + b`, with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    /// He initialization: weights ~ N(0, 2 / fan_in), zero bias.
    fn he(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || T::lit(normal.sample(rng)));
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, x: &ArrayView2<T>) -> Array2<T> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    /// Accumulates `dW = dy^T x`, `db = sum(dy)` into `grad` and returns `dx = dy W`.
    fn backward(&self, x: &ArrayView2<T>, dy: &Array2<T>, grad: &mut Dense<T>) -> Array2<T> {
        grad.weight += &dy.t().dot(x);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }

    fn values(&self) -> impl Iterator<Item = &T> {
        self.weight.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Encoder and decoder weights. Also used as the container for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams<T> {
    pub encoder: Vec<Dense<T>>,
    pub mu_head: Dense<T>,
    pub logvar_head: Dense<T>,
    pub decoder: Vec<Dense<T>>,
    pub output: Dense<T>,
}

fn layer_dims(arch: &VaeArchitecture) -> (Vec<(usize, usize)>, (usize, usize), Vec<(usize, usize)>, (usize, usize)) {
    let mut encoder = Vec::new();
    let mut prev = arch.input_dim;
    for &w in &arch.encoder_hidden {
        encoder.push((prev, w));
        prev = w;
    }
    let head = (prev, arch.latent_dim);
    let mut decoder = Vec::new();
    let mut prev = arch.latent_dim;
    for &w in &arch.decoder_hidden {
        decoder.push((prev, w));
        prev = w;
    }
    (encoder, head, decoder, (prev, arch.input_dim))
}

impl<T: Real> VaeParams<T> {
    /// He-initialized parameters; identical seeds give identical bits.
    pub fn init(arch: &VaeArchitecture, seed: u64) -> Result<Self, VaeError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (enc, head, dec, out) = layer_dims(arch);
        Ok(Self {
            encoder: enc.iter().map(|&(i, o)| Dense::he(i, o, &mut rng)).collect(),
            mu_head: Dense::he(head.0, head.1, &mut rng),
            logvar_head: Dense::he(head.0, head.1, &mut rng),
            decoder: dec.iter().map(|&(i, o)| Dense::he(i, o, &mut rng)).collect(),
            output: Dense::he(out.0, out.1, &mut rng),
        })
    }

    pub fn zeros(arch: &VaeArchitecture) -> Self {
        let (enc, head, dec, out) = layer_dims(arch);
        Self {
            encoder: enc.iter().map(|&(i, o)| Dense::zeros(i, o)).collect(),
            mu_head: Dense::zeros(head.0, head.1),
            logvar_head: Dense::zeros(head.0, head.1),
            decoder: dec.iter().map(|&(i, o)| Dense::zeros(i, o)).collect(),
            output: Dense::zeros(out.0, out.1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let map = |d: &Dense<T>| Dense::zeros(d.fan_in(), d.fan_out());
        Self {
            encoder: self.encoder.iter().map(map).collect(),
            mu_head: map(&self.mu_head),
            logvar_head: map(&self.logvar_head),
            decoder: self.decoder.iter().map(map).collect(),
            output: map(&self.output),
        }
    }

    pub fn architecture(&self) -> VaeArchitecture {
        VaeArchitecture {
            input_dim: self.encoder.first().map_or(self.mu_head.fan_in(), Dense::fan_in),
            encoder_hidden: self.encoder.iter().map(Dense::fan_out).collect(),
            decoder_hidden: self.decoder.iter().map(Dense::fan_out).collect(),
            latent_dim: self.mu_head.fan_out(),
        }
    }

    /// Layers in canonical order with stable names (used for checkpoints).
    pub fn named_layers(&self) -> Vec<(String, &Dense<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            out.push((format!("encoder_{i}"), l));
        }
        out.push(("mu_head".into(), &self.mu_head));
        out.push(("logvar_head".into(), &self.logvar_head));
        for (i, l) in self.decoder.iter().enumerate() {
            out.push((format!("decoder_{i}"), l));
        }
        out.push(("output".into(), &self.output));
        out
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Dense<T>> {
        let mut out: Vec<&mut Dense<T>> = self.encoder.iter_mut().collect();
        out.push(&mut self.mu_head);
        out.push(&mut self.logvar_head);
        out.extend(self.decoder.iter_mut());
        out.push(&mut self.output);
        out
    }

    /// Every scalar parameter in canonical order.
    pub fn values(&self) -> Vec<T> {
        self.named_layers()
            .into_iter()
            .flat_map(|(_, l)| l.values().copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn values_mut(&mut self) -> Vec<&mut T> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| l.values_mut())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.named_layers()
            .iter()
            .map(|(_, l)| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_layers()
            .iter()
            .all(|(_, l)| l.values().all(|v| v.is_finite()))
    }

    /// Posterior mean `mu(x)` for a batch of inputs.
    pub fn encode_mean(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut h = x.to_owned();
        for layer in &self.encoder {
            h = layer.apply(&h.view());
            relu_inplace(&mut h);
        }
        self.mu_head.apply(&h.view())
    }
}

fn relu_inplace<T: Real>(a: &mut Array2<T>) {
    a.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    /// Input followed by the post-ReLU output of each encoder layer.
    pub encoder_acts: Vec<Array2<T>>,
    pub mu: Array2<T>,
    pub logvar: Array2<T>,
    pub noise: Array2<T>,
    pub z: Array2<T>,
    /// `z` followed by the post-ReLU output of each decoder layer.
    pub decoder_acts: Vec<Array2<T>>,
    pub reconstruction: Array2<T>,
}

/// Runs the network with the reparameterization `z = mu + exp(logvar / 2) * noise`.
pub fn forward<T: Real>(
    params: &VaeParams<T>,
    x: ArrayView2<T>,
    noise: ArrayView2<T>,
) -> Result<ForwardPass<T>, VaeError> {
    let arch = params.architecture();
    if x.ncols() != arch.input_dim || noise.ncols() != arch.latent_dim || x.nrows() != noise.nrows() {
        return Err(VaeError::Shape(format!(
            "input {:?} / noise {:?} incompatible with architecture {}->{}",
            x.dim(),
            noise.dim(),
            arch.input_dim,
            arch.latent_dim
        )));
    }
    let mut encoder_acts = Vec::with_capacity(params.encoder.len() + 1);
    encoder_acts.push(x.to_owned());
    for layer in &params.encoder {
        let mut h = layer.apply(&encoder_acts.last().expect("non-empty").view());
        relu_inplace(&mut h);
        encoder_acts.push(h);
    }
    let top = encoder_acts.last().expect("non-empty").view();
    let mu = params.mu_head.apply(&top);
    let logvar = params.logvar_head.apply(&top);

    let half = T::lit(0.5);
    let mut z = mu.clone();
    Zip::from(&mut z)
        .and(&logvar)
        .and(&noise)
        .for_each(|z, &lv, &e| *z = *z + (lv * half).exp() * e);

    let mut decoder_acts = Vec::with_capacity(params.decoder.len() + 1);
    decoder_acts.push(z.clone());
    for layer in &params.decoder {
        let mut h = layer.apply(&decoder_acts.last().expect("non-empty").view());
        relu_inplace(&mut h);
        decoder_acts.push(h);
    }
    let reconstruction = params
        .output
        .apply(&decoder_acts.last().expect("non-empty").view());
    if reconstruction.iter().any(|v| !v.is_finite()) || logvar.iter().any(|v| !v.is_finite()) {
        return Err(VaeError::NonFinite("activation"));
    }
    Ok(ForwardPass {
        encoder_acts,
        mu,
        logvar,
        noise: noise.to_owned(),
        z,
        decoder_acts,
        reconstruction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loss<T> {
    /// `(recon + kl) / batch_size`, the minimized objective.
    pub total: T,
    /// Sum over batch and bands of squared reconstruction error.
    pub recon: T,
    /// Sum over the batch of `KL(q(z|x) || N(0, I))`.
    pub kl: T,
}

/// Negative single-sample ELBO under a unit-variance Gaussian likelihood.
pub fn loss<T: Real>(
    x: ArrayView2<T>,
    mu: ArrayView2<T>,
    logvar: ArrayView2<T>,
    reconstruction: ArrayView2<T>,
) -> Loss<T> {
    let mut recon = T::zero();
    Zip::from(&x).and(&reconstruction).for_each(|&a, &b| {
        let d = a - b;
        recon = recon + d * d;
    });
    let mut kl = T::zero();
    Zip::from(&mu).and(&logvar).for_each(|&m, &lv| {
        kl = kl + m * m + lv.exp() - lv - T::one();
    });
    kl = kl * T::lit(0.5);
    let batch = T::from_count(x.nrows().max(1));
    Loss {
        total: (recon + kl) / batch,
        recon,
        kl,
    }
}

/// Exact gradient of `loss(..).total` with respect to every parameter.
///
/// The noise is held fixed, so the gradient includes the pathwise term through
/// `z = mu + exp(logvar / 2) * noise`.
pub fn gradients<T: Real>(
    params: &VaeParams<T>,
    x: ArrayView2<T>,
    noise: ArrayView2<T>,
) -> Result<(VaeParams<T>, Loss<T>), VaeError> {
    let pass = forward(params, x, noise)?;
    let value = loss(x, pass.mu.view(), pass.logvar.view(), pass.reconstruction.view());
    let mut grad = params.zeros_like();
    let inv_b = T::one() / T::from_count(x.nrows().max(1));
    let two = T::lit(2.0);
    let half = T::lit(0.5);

    // d total / d reconstruction
    let mut dy = &pass.reconstruction - &x;
    dy.mapv_inplace(|v| v * two * inv_b);

    let top = pass.decoder_acts.last().expect("non-empty").view();
    let mut dh = params.output.backward(&top, &dy, &mut grad.output);
    for (i, layer) in params.decoder.iter().enumerate().rev() {
        relu_backward(&mut dh, &pass.decoder_acts[i + 1]);
        dh = layer.backward(&pass.decoder_acts[i].view(), &dh, &mut grad.decoder[i]);
    }
    let dz = dh;

    let mut dmu = dz.clone();
    Zip::from(&mut dmu)
        .and(&pass.mu)
        .for_each(|d, &m| *d = *d + m * inv_b);
    let mut dlogvar = dz;
    Zip::from(&mut dlogvar)
        .and(&pass.logvar)
        .and(&pass.noise)
        .for_each(|d, &lv, &e| {
            let path = *d * e * half * (lv * half).exp();
            let kl = half * (lv.exp() - T::one()) * inv_b;
            *d = path + kl;
        });

    let top = pass.encoder_acts.last().expect("non-empty").view();
    let mut dh = params.mu_head.backward(&top, &dmu, &mut grad.mu_head);
    dh += &params.logvar_head.backward(&top, &dlogvar, &mut grad.logvar_head);
    for (i, layer) in params.encoder.iter().enumerate().rev() {
        relu_backward(&mut dh, &pass.encoder_acts[i + 1]);
        dh = layer.backward(&pass.encoder_acts[i].view(), &dh, &mut grad.encoder[i]);
    }
    if !grad.all_finite() {
        return Err(VaeError::NonFinite("gradient"));
    }
    Ok((grad, value))
}

fn relu_backward<T: Real>(d: &mut Array2<T>, activation: &Array2<T>) {
    Zip::from(d).and(activation).for_each(|g, &a| {
        if a <= T::zero() {
            *g = T::zero();
        }
    });
}
