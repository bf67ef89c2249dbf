//! Datasets under the artifacts root.
//!
//! ```text
//! <root>/<name>/graph/          graph artifact written by `hsal graph`
//! <root>/<name>/cube.npy        (height, width, bands) spectra, or
//! <root>/<name>/cloud.npy       (n, bands) spectra in pixel order
//! <root>/<name>/truth.npy       optional ground-truth map (0 = background)
//! <root>/<name>/classes.json    optional list of class names
//! ```

use std::path::{Path, PathBuf};

use hsal_core::io::{load_labels, LabelMap};
use hsal_core::{Artifact, Cloud, Cube, Model};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

const PALETTE: [&str; 16] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#637939", "#8c6d31", "#843c39", "#7b4173", "#3182bd",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub class: u32,
    pub name: String,
    pub color: String,
}

pub struct Dataset {
    pub name: String,
    pub artifact: Artifact,
    pub spectra: Cloud,
    /// Compacted ground truth, when `truth.npy` is present.
    pub truth: Option<LabelMap>,
    pub classes: Vec<ClassInfo>,
    pub height: usize,
    pub width: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.artifact.manifest.n
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// `(row, col)` of a point; row-major over the image when the artifact has no origin.
    pub fn pixel(&self, index: usize) -> (usize, usize) {
        self.artifact.pixel(index).unwrap_or((index / self.width, index % self.width))
    }

    /// Builds the LAND model at diffusion time `t` from the stored spectrum.
    pub fn model(&self, t: u32) -> Result<Model, ApiError> {
        Model::from_spectrum(self.artifact.spectrum.clone(), self.artifact.density.clone(), t)
            .map_err(|e| ApiError::conflict(format!("cannot rebuild model for {}: {e}", self.name)))
    }
}

pub fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn missing(dir: &Path, what: &str, hint: &str) -> ApiError {
    ApiError::conflict(format!("{what} not found in {}; {hint}", dir.display()))
}

/// Loads a dataset, or fails with a 409 that says how to create what is missing.
pub fn load(root: &Path, name: &str, num_classes: Option<usize>) -> Result<Dataset, ApiError> {
    if !valid_name(name) {
        return Err(ApiError::unprocessable(format!("invalid dataset name {name:?}")));
    }
    let dir: PathBuf = root.join(name);
    let graph_dir = dir.join("graph");
    if !graph_dir.join(hsal_core::artifact::MANIFEST).exists() {
        return Err(missing(
            &dir,
            "graph/manifest.json",
            &format!("run `hsal graph --input <latent.npy> --out {}`", graph_dir.display()),
        ));
    }
    let artifact = Artifact::load_without_weights(&graph_dir)
        .map_err(|e| ApiError::conflict(format!("graph artifact in {} is unreadable: {e}", graph_dir.display())))?;
    let n = artifact.manifest.n;

    let (spectra, cube_dims) = if dir.join("cube.npy").exists() {
        let cube = Cube::load(dir.join("cube.npy")).map_err(|e| ApiError::conflict(format!("cube.npy: {e}")))?;
        let dims = (cube.height, cube.width);
        (cube.to_cloud(), Some(dims))
    } else if dir.join("cloud.npy").exists() {
        (Cloud::load(dir.join("cloud.npy")).map_err(|e| ApiError::conflict(format!("cloud.npy: {e}")))?, None)
    } else {
        return Err(missing(&dir, "cube.npy or cloud.npy", "copy the spectra the graph was built from next to graph/"));
    };
    if spectra.n() != n {
        return Err(ApiError::conflict(format!(
            "spectra hold {} pixels but the graph has {n}; rebuild one of them",
            spectra.n()
        )));
    }
    let (height, width) = artifact
        .manifest
        .grid
        .or(cube_dims)
        .unwrap_or((1, n));

    let truth = if dir.join("truth.npy").exists() {
        let raw = load_labels(dir.join("truth.npy"), Some((height, width)))
            .map_err(|e| ApiError::conflict(format!("truth.npy: {e}")))?;
        Some(raw.compact().0)
    } else {
        None
    };

    let names: Option<Vec<String>> = if dir.join("classes.json").exists() {
        let text = std::fs::read_to_string(dir.join("classes.json")).map_err(|e| ApiError::conflict(format!("classes.json: {e}")))?;
        Some(serde_json::from_str(&text).map_err(|e| ApiError::conflict(format!("classes.json: {e}")))?)
    } else {
        None
    };
    let count = names
        .as_ref()
        .map(Vec::len)
        .or(truth.as_ref().map(|t| t.num_classes))
        .or(num_classes)
        .ok_or_else(|| {
            missing(&dir, "class list", "add classes.json or truth.npy, or pass num_classes when creating the session")
        })?;
    if count == 0 {
        return Err(ApiError::unprocessable("a dataset needs at least one class"));
    }
    let classes = (1..=count)
        .map(|c| ClassInfo {
            class: c as u32,
            name: names
                .as_ref()
                .and_then(|v| v.get(c - 1).cloned())
                .unwrap_or_else(|| format!("class {c}")),
            color: PALETTE[(c - 1) % PALETTE.len()].to_string(),
        })
        .collect();

    Ok(Dataset {
        name: name.to_string(),
        artifact,
        spectra,
        truth,
        classes,
        height,
        width,
    })
}
