//! Graph artifact directory: everything needed to rank queries and propagate
//! labels without recomputing the kNN graph or the spectrum.
//!
//! ```text
//! manifest.json      parameters, sizes, input hash
//! weights.coo        W as little-endian triplets (see below)
//! eigenvalues.npy    (M,)
//! eigenvectors.npy   (n, M)
//! residuals.npy      (M,)
//! density.npy        (n,)
//! origin.npy         (n, 2) pixel (row, col), optional
//! ```
//!
//! `weights.coo` starts with the 8-byte magic `HSALCOO1`, then `u64 n`,
//! `u64 nnz`, then `nnz` records of `(u64 row, u64 col, f64 value)`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{CsrMatrix, Spectrum};
use crate::io::npy::{load_npy, save_npy, write_npy, NpyArray, NpyData, NpyError};
use crate::io::PointCloud;
use crate::land::{LandConfig, LandError, LandModel};
use crate::scalar::Real;

pub const MANIFEST: &str = "manifest.json";
pub const WEIGHTS: &str = "weights.coo";
const COO_MAGIC: &[u8; 8] = b"HSALCOO1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Npy(#[from] NpyError),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Land(#[from] LandError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphManifest {
    pub format_version: u32,
    pub n: usize,
    pub dim: usize,
    pub k: usize,
    pub sigma: f64,
    pub sigma0: f64,
    pub num_eigs: usize,
    pub t: u32,
    pub nnz: usize,
    pub krylov_dim: usize,
    /// SHA-256 of the input cloud encoded as NPY.
    pub input_sha256: String,
    /// Spatial shape when the points are the pixels of an image.
    pub grid: Option<(usize, usize)>,
    pub has_origin: bool,
}

/// A fitted graph ready to be written to or read from disk.
#[derive(Debug, Clone)]
pub struct GraphArtifact<T> {
    pub manifest: GraphManifest,
    pub weights: Option<CsrMatrix<T>>,
    pub spectrum: Spectrum<T>,
    pub density: Vec<T>,
    pub origin: Option<Vec<(usize, usize)>>,
}

/// Hex SHA-256 of a cloud's NPY encoding.
pub fn cloud_sha256<T: Real>(cloud: &PointCloud<T>) -> String {
    let mut hasher = Sha256::new();
    write_npy(&cloud.to_npy(), &mut hasher).expect("hashing cannot fail");
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl<T: Real> GraphArtifact<T> {
    pub fn from_model(
        model: &LandModel<T>,
        cloud: &PointCloud<T>,
        config: &LandConfig,
        grid: Option<(usize, usize)>,
    ) -> Self {
        let origin = cloud.origin.clone().or_else(|| {
            grid.filter(|(h, w)| h * w == cloud.n())
                .map(|(_, w)| (0..cloud.n()).map(|i| (i / w, i % w)).collect())
        });
        let manifest = GraphManifest {
            format_version: FORMAT_VERSION,
            n: cloud.n(),
            dim: cloud.dim(),
            k: config.graph.k,
            sigma: model.sigma.as_f64(),
            sigma0: model.sigma0.as_f64(),
            num_eigs: model.spectrum.len(),
            t: config.graph.t,
            nnz: model.graph.as_ref().map_or(0, |g| g.w.nnz()),
            krylov_dim: model.spectrum.krylov_dim,
            input_sha256: cloud_sha256(cloud),
            grid,
            has_origin: origin.is_some(),
        };
        Self {
            manifest,
            weights: model.graph.as_ref().map(|g| g.w.clone()),
            spectrum: model.spectrum.clone(),
            density: model.scores.density.clone(),
            origin,
        }
    }

    /// Rebuilds the LAND model (scores, forest, coordinates) from the stored spectrum.
    pub fn to_model(&self) -> Result<LandModel<T>, ArtifactError> {
        let mut model = LandModel::from_spectrum(self.spectrum.clone(), self.density.clone(), self.manifest.t)?;
        model.sigma = T::lit(self.manifest.sigma);
        model.sigma0 = T::lit(self.manifest.sigma0);
        Ok(model)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), ArtifactError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let m = self.spectrum.len();
        let n = self.manifest.n;
        let vectors = self.spectrum.eigenvectors.as_standard_layout();
        save_npy(&npy(vec![m], self.spectrum.eigenvalues.clone()), dir.join("eigenvalues.npy"))?;
        save_npy(&npy(vec![n, m], vectors.iter().copied().collect()), dir.join("eigenvectors.npy"))?;
        save_npy(&npy(vec![m], self.spectrum.residuals.clone()), dir.join("residuals.npy"))?;
        save_npy(&npy(vec![n], self.density.clone()), dir.join("density.npy"))?;
        if let Some(origin) = &self.origin {
            let flat: Vec<i64> = origin.iter().flat_map(|&(r, c)| [r as i64, c as i64]).collect();
            save_npy(&NpyArray::from_vec(vec![n, 2], flat)?, dir.join("origin.npy"))?;
        }
        if let Some(w) = &self.weights {
            write_coo(w, dir.join(WEIGHTS))?;
        }
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ArtifactError> {
        Self::load_inner(dir.as_ref(), true)
    }

    /// Like [`load`](Self::load) but skips the weight matrix, which ranking and propagation do not need.
    pub fn load_without_weights(dir: impl AsRef<Path>) -> Result<Self, ArtifactError> {
        Self::load_inner(dir.as_ref(), false)
    }

    fn load_inner(dir: &Path, weights: bool) -> Result<Self, ArtifactError> {
        let manifest = read_manifest(dir)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(ArtifactError::Format(format!(
                "format version {} is not supported",
                manifest.format_version
            )));
        }
        let (n, m) = (manifest.n, manifest.num_eigs);
        let eigenvalues = read_vec::<T>(dir, "eigenvalues.npy", &[m])?;
        let vectors = read_vec::<T>(dir, "eigenvectors.npy", &[n, m])?;
        let residuals = read_vec::<T>(dir, "residuals.npy", &[m])?;
        let density = read_vec::<T>(dir, "density.npy", &[n])?;
        let origin = if manifest.has_origin {
            let raw = load_npy(dir.join("origin.npy"))?;
            check_shape(&raw, "origin.npy", &[n, 2])?;
            let flat = raw.data.to_i64().ok_or_else(|| ArtifactError::Format("origin.npy must hold integers".into()))?;
            Some(flat.chunks(2).map(|p| (p[0] as usize, p[1] as usize)).collect())
        } else {
            None
        };
        let weights = if weights && dir.join(WEIGHTS).exists() {
            let w = read_coo::<T>(dir.join(WEIGHTS))?;
            if w.n() != n || w.nnz() != manifest.nnz {
                return Err(ArtifactError::Format(format!(
                    "{WEIGHTS} holds {} points and {} entries; manifest says {n} and {}",
                    w.n(),
                    w.nnz(),
                    manifest.nnz
                )));
            }
            Some(w)
        } else {
            None
        };
        let spectrum = Spectrum {
            eigenvalues,
            eigenvectors: Array2::from_shape_vec((n, m), vectors).expect("shape checked"),
            residuals,
            krylov_dim: manifest.krylov_dim,
        };
        Ok(Self {
            manifest,
            weights,
            spectrum,
            density,
            origin,
        })
    }

    /// Pixel `(row, col)` of a point, when known.
    pub fn pixel(&self, index: usize) -> Option<(usize, usize)> {
        self.origin.as_ref().and_then(|o| o.get(index).copied())
    }
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<GraphManifest, ArtifactError> {
    let path = dir.as_ref().join(MANIFEST);
    let text = fs::read_to_string(&path)
        .map_err(|e| ArtifactError::Format(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn npy<T: Real>(shape: Vec<usize>, values: Vec<T>) -> NpyArray {
    NpyArray {
        shape,
        data: T::into_data(values),
    }
}

fn check_shape(array: &NpyArray, name: &str, shape: &[usize]) -> Result<(), ArtifactError> {
    if array.shape != shape {
        return Err(ArtifactError::Format(format!(
            "{name} has shape {:?}, expected {shape:?}",
            array.shape
        )));
    }
    Ok(())
}

fn read_vec<T: Real>(dir: &Path, name: &str, shape: &[usize]) -> Result<Vec<T>, ArtifactError> {
    let array = load_npy(dir.join(name))?;
    check_shape(&array, name, shape)?;
    match array.data {
        NpyData::F32(_) | NpyData::F64(_) => Ok(array.data.to_f64().into_iter().map(T::lit).collect()),
        _ => Err(ArtifactError::Format(format!("{name} must hold floats"))),
    }
}

pub fn write_coo<T: Real>(w: &CsrMatrix<T>, path: impl AsRef<Path>) -> Result<(), ArtifactError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(COO_MAGIC)?;
    out.write_all(&(w.n() as u64).to_le_bytes())?;
    out.write_all(&(w.nnz() as u64).to_le_bytes())?;
    for (i, j, v) in w.triplets() {
        out.write_all(&(i as u64).to_le_bytes())?;
        out.write_all(&(j as u64).to_le_bytes())?;
        out.write_all(&v.as_f64().to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_coo<T: Real>(path: impl AsRef<Path>) -> Result<CsrMatrix<T>, ArtifactError> {
    let mut input = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != COO_MAGIC {
        return Err(ArtifactError::Format("weights file has a bad magic string".into()));
    }
    let mut word = [0u8; 8];
    let mut next = |input: &mut BufReader<fs::File>| -> Result<u64, ArtifactError> {
        input.read_exact(&mut word).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => ArtifactError::Format("weights file is truncated".into()),
            _ => e.into(),
        })?;
        Ok(u64::from_le_bytes(word))
    };
    let n = next(&mut input)? as usize;
    let nnz = next(&mut input)? as usize;
    let mut triplets = Vec::with_capacity(nnz.min(1 << 28));
    for _ in 0..nnz {
        let i = next(&mut input)? as usize;
        let j = next(&mut input)? as usize;
        let v = f64::from_bits(next(&mut input)?);
        if i >= n || j >= n {
            return Err(ArtifactError::Format(format!("weight entry ({i}, {j}) outside {n} points")));
        }
        triplets.push((i, j, T::lit(v)));
    }
    Ok(CsrMatrix::from_triplets_max(n, triplets))
}
