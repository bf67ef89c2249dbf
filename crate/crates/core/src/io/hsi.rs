//! Hyperspectral cubes, flattened point clouds and ground-truth label maps.
//!
//! Pixels are always flattened row-major: pixel `(row, col)` becomes point
//! `row * width + col`. Cube values are band-interleaved-by-pixel, so the
//! spectrum of a pixel is a contiguous run of `bands` values.

use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use super::npy::{load_npy, NpyArray, NpyData, NpyError};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Npy(#[from] NpyError),
    #[error("expected a {expected}-dimensional array, found shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("dimensions {dims:?} imply {expected} values but {found} were given")]
    Length {
        dims: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("empty dimension in shape {0:?}")]
    Empty(Vec<usize>),
    #[error("constant cube (min == max == {0}); cannot normalize")]
    ConstantCube(f64),
    #[error("label map is integer-valued; found float dtype")]
    FloatLabels,
    #[error("negative label {label} at pixel {index}")]
    NegativeLabel { index: usize, label: i64 },
    #[error("label map shape {found:?} does not match cube spatial shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: Vec<usize>,
    },
    #[error("label map contains no labeled pixel")]
    NoClasses,
    #[error("origin ({row}, {col}) is out of bounds or duplicated")]
    BadOrigin { row: usize, col: usize },
    #[error("point cloud has no origin information")]
    MissingOrigin,
}

/// A hyperspectral image: `height x width` pixels, `bands` values per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube<T> {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub values: Vec<T>,
    /// Global `(min, max)` of the raw values, recorded by [`HsiCube::normalize`].
    pub value_range: Option<(T, T)>,
}

impl<T: Real> HsiCube<T> {
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<T>) -> Result<Self, DataError> {
        let dims = vec![height, width, bands];
        if dims.contains(&0) {
            return Err(DataError::Empty(dims));
        }
        let expected = height * width * bands;
        if values.len() != expected {
            return Err(DataError::Length {
                dims,
                expected,
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite(i));
        }
        Ok(Self {
            height,
            width,
            bands,
            values,
            value_range: None,
        })
    }

    /// Builds a cube from a 3-D array of shape `(height, width, bands)`.
    ///
    /// The first two axes are taken as read, so a `(83, 86, 224)` file and its
    /// `(86, 83, 224)` transpose both load; `height`/`width` record which one it was.
    pub fn from_npy(array: &NpyArray) -> Result<Self, DataError> {
        if array.ndim() != 3 {
            return Err(DataError::Rank {
                expected: 3,
                shape: array.shape.clone(),
            });
        }
        let values = array.data.to_f64().into_iter().map(T::lit).collect();
        Self::new(array.shape[0], array.shape[1], array.shape[2], values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        Self::from_npy(&load_npy(path)?)
    }

    pub fn to_npy(&self) -> NpyArray {
        NpyArray {
            shape: vec![self.height, self.width, self.bands],
            data: T::into_data(self.values.clone()),
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn spectrum(&self, row: usize, col: usize) -> &[T] {
        let start = (row * self.width + col) * self.bands;
        &self.values[start..start + self.bands]
    }

    pub fn min_max(&self) -> (T, T) {
        self.values
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Affine global min-max scaling into `[0, 1]`.
    ///
    /// The range of the raw data is kept in `value_range`; a cube that already
    /// carries a range keeps the earlier one.
    pub fn normalize(&self) -> Result<Self, DataError> {
        let (lo, hi) = self.min_max();
        if !(hi > lo) {
            return Err(DataError::ConstantCube(lo.as_f64()));
        }
        let span = hi - lo;
        let values = self
            .values
            .iter()
            .map(|&v| ((v - lo) / span).max(T::zero()).min(T::one()))
            .collect();
        Ok(Self {
            height: self.height,
            width: self.width,
            bands: self.bands,
            values,
            value_range: Some(self.value_range.unwrap_or((lo, hi))),
        })
    }

    /// Flattens the cube row-major into an `(height*width) x bands` cloud with origins.
    pub fn to_cloud(&self) -> PointCloud<T> {
        let n = self.pixels();
        let points = Array2::from_shape_vec((n, self.bands), self.values.clone())
            .expect("cube invariants guarantee the shape");
        let origin = (0..n).map(|i| (i / self.width, i % self.width)).collect();
        PointCloud {
            points,
            origin: Some(origin),
        }
    }
}

/// `n` points in `dim`-dimensional space, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    pub points: Array2<T>,
    /// Optional `(row, col)` position of each point in its source cube.
    pub origin: Option<Vec<(usize, usize)>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Array2<T>) -> Result<Self, DataError> {
        let (n, dim) = points.dim();
        if n == 0 || dim == 0 {
            return Err(DataError::Empty(vec![n, dim]));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite(i));
        }
        let points = if points.is_standard_layout() {
            points
        } else {
            points.as_standard_layout().into_owned()
        };
        Ok(Self {
            points,
            origin: None,
        })
    }

    pub fn with_origin(mut self, origin: Vec<(usize, usize)>, height: usize, width: usize) -> Result<Self, DataError> {
        if origin.len() != self.n() {
            return Err(DataError::Length {
                dims: vec![self.n()],
                expected: self.n(),
                found: origin.len(),
            });
        }
        let mut seen = vec![false; height * width];
        for &(row, col) in &origin {
            if row >= height || col >= width || std::mem::replace(&mut seen[row * width + col], true) {
                return Err(DataError::BadOrigin { row, col });
            }
        }
        self.origin = Some(origin);
        Ok(self)
    }

    pub fn from_npy(array: &NpyArray) -> Result<Self, DataError> {
        if array.ndim() != 2 {
            return Err(DataError::Rank {
                expected: 2,
                shape: array.shape.clone(),
            });
        }
        let values = array.data.to_f64().into_iter().map(T::lit).collect();
        let points = Array2::from_shape_vec((array.shape[0], array.shape[1]), values)
            .expect("npy shape checked against payload length");
        Self::new(points)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        Self::from_npy(&load_npy(path)?)
    }

    pub fn to_npy(&self) -> NpyArray {
        NpyArray {
            shape: vec![self.n(), self.dim()],
            data: T::into_data(self.points.iter().copied().collect()),
        }
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        let dim = self.dim();
        let flat = self.points.as_slice().expect("standard layout");
        &flat[i * dim..(i + 1) * dim]
    }

    /// Reassembles a `height x width` cube using the recorded origins.
    pub fn to_cube(&self, height: usize, width: usize) -> Result<HsiCube<T>, DataError> {
        let origin = self.origin.as_ref().ok_or(DataError::MissingOrigin)?;
        let bands = self.dim();
        if origin.len() != height * width {
            return Err(DataError::Length {
                dims: vec![height, width, bands],
                expected: height * width,
                found: origin.len(),
            });
        }
        let mut values = vec![T::zero(); height * width * bands];
        for (i, &(row, col)) in origin.iter().enumerate() {
            if row >= height || col >= width {
                return Err(DataError::BadOrigin { row, col });
            }
            let start = (row * width + col) * bands;
            values[start..start + bands].copy_from_slice(self.row(i));
        }
        HsiCube::new(height, width, bands, values)
    }
}

/// Integer label per point; `0` marks an unlabeled (background) pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub labels: Vec<u32>,
    pub num_classes: usize,
    pub class_names: Option<Vec<String>>,
}

impl LabelMap {
    /// Wraps a label vector; `num_classes` is the largest label present.
    pub fn new(labels: Vec<u32>) -> Result<Self, DataError> {
        let num_classes = labels.iter().copied().max().unwrap_or(0) as usize;
        if num_classes == 0 {
            return Err(DataError::NoClasses);
        }
        Ok(Self {
            labels,
            num_classes,
            class_names: None,
        })
    }

    pub fn with_num_classes(labels: Vec<u32>, num_classes: usize) -> Self {
        Self {
            labels,
            num_classes,
            class_names: None,
        }
    }

    /// Parses an integer array, optionally checking its spatial shape against a cube.
    pub fn from_npy(array: &NpyArray, spatial: Option<(usize, usize)>) -> Result<Self, DataError> {
        let raw = match &array.data {
            NpyData::F32(_) | NpyData::F64(_) => return Err(DataError::FloatLabels),
            data => data.to_i64().ok_or(DataError::FloatLabels)?,
        };
        if let Some((h, w)) = spatial {
            let matches = match array.shape.as_slice() {
                [rows, cols] => *rows == h && *cols == w,
                [len] => *len == h * w,
                _ => false,
            };
            if !matches {
                return Err(DataError::ShapeMismatch {
                    expected: (h, w),
                    found: array.shape.clone(),
                });
            }
        }
        let mut labels = Vec::with_capacity(raw.len());
        for (index, &label) in raw.iter().enumerate() {
            if label < 0 {
                return Err(DataError::NegativeLabel { index, label });
            }
            labels.push(u32::try_from(label).map_err(|_| DataError::NegativeLabel { index, label })?);
        }
        Self::new(labels)
    }

    pub fn to_npy(&self, spatial: Option<(usize, usize)>) -> NpyArray {
        let shape = match spatial {
            Some((h, w)) if h * w == self.labels.len() => vec![h, w],
            _ => vec![self.labels.len()],
        };
        NpyArray {
            shape,
            data: NpyData::I32(self.labels.iter().map(|&l| l as i32).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Sorted distinct nonzero labels.
    pub fn classes_present(&self) -> Vec<u32> {
        let mut seen: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }

    /// Indices of points carrying a nonzero label.
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] != 0).collect()
    }

    /// Renumbers the classes present to `1..=C` in ascending order, keeping 0.
    /// Returns the map and the original id of each new class.
    pub fn compact(&self) -> (LabelMap, Vec<u32>) {
        let present = self.classes_present();
        let labels = self
            .labels
            .iter()
            .map(|&l| match l {
                0 => 0,
                l => present.binary_search(&l).expect("present") as u32 + 1,
            })
            .collect();
        let names = self.class_names.as_ref().map(|names| {
            present
                .iter()
                .map(|&c| names.get(c as usize - 1).cloned().unwrap_or_else(|| c.to_string()))
                .collect()
        });
        let map = LabelMap {
            labels,
            num_classes: present.len(),
            class_names: names,
        };
        (map, present)
    }
}

/// Loads a ground-truth map and checks it against the cube's spatial shape.
pub fn load_labels(path: impl AsRef<Path>, spatial: Option<(usize, usize)>) -> Result<LabelMap, DataError> {
    LabelMap::from_npy(&load_npy(path)?, spatial)
}
