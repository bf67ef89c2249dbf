//! On-disk checkpoint: one NPY file per weight matrix and bias vector, plus a
//! `manifest.json` describing the architecture, training config and history.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::adam::TrainConfig;
use super::network::{VaeArchitecture, VaeParams};
use super::train::TrainHistory;
use super::VaeError;
use crate::io::npy::{load_npy, save_npy, NpyArray};
use crate::scalar::Real;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub architecture: VaeArchitecture,
    pub config: TrainConfig,
    pub seed: u64,
    pub epoch: usize,
    pub history: TrainHistory,
    pub layers: Vec<String>,
}

pub fn save_checkpoint<T: Real>(
    dir: impl AsRef<Path>,
    params: &VaeParams<T>,
    config: &TrainConfig,
    history: &TrainHistory,
) -> Result<(), VaeError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut layers = Vec::new();
    for (name, layer) in params.named_layers() {
        let (rows, cols) = layer.weight.dim();
        let w = NpyArray {
            shape: vec![rows, cols],
            data: T::into_data(layer.weight.iter().copied().collect()),
        };
        let b = NpyArray {
            shape: vec![layer.bias.len()],
            data: T::into_data(layer.bias.to_vec()),
        };
        save_npy(&w, dir.join(format!("{name}_weight.npy")))?;
        save_npy(&b, dir.join(format!("{name}_bias.npy")))?;
        layers.push(name);
    }
    let manifest = CheckpointManifest {
        architecture: params.architecture(),
        config: *config,
        seed: config.seed,
        epoch: history.total.len(),
        history: history.clone(),
        layers,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(dir: impl AsRef<Path>) -> Result<(VaeParams<T>, CheckpointManifest), VaeError> {
    let dir = dir.as_ref();
    let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    manifest.architecture.validate()?;
    let mut params = VaeParams::<T>::zeros(&manifest.architecture);
    let names: Vec<String> = params.named_layers().into_iter().map(|(n, _)| n).collect();
    if names != manifest.layers {
        return Err(VaeError::Checkpoint(format!(
            "manifest lists layers {:?}, architecture implies {:?}",
            manifest.layers, names
        )));
    }
    for (name, layer) in names.iter().zip(params.layers_mut()) {
        let w = load_npy(dir.join(format!("{name}_weight.npy")))?;
        let b = load_npy(dir.join(format!("{name}_bias.npy")))?;
        if w.shape != [layer.weight.nrows(), layer.weight.ncols()] || b.shape != [layer.bias.len()] {
            return Err(VaeError::Checkpoint(format!(
                "layer {name}: stored shapes {:?}/{:?} disagree with manifest",
                w.shape, b.shape
            )));
        }
        let to_t = |a: &NpyArray| a.data.to_f64().into_iter().map(T::lit).collect::<Vec<T>>();
        layer.weight = Array2::from_shape_vec(layer.weight.dim(), to_t(&w)).expect("shape checked");
        layer.bias = Array1::from(to_t(&b));
    }
    Ok((params, manifest))
}
