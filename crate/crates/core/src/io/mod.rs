//! Loading, validating and persisting cubes, point clouds and label maps.

pub mod hsi;
pub mod npy;

pub use hsi::{load_labels, DataError, HsiCube, LabelMap, PointCloud};
pub use npy::{load_npy, save_npy, save_slice, NpyArray, NpyData, NpyError};
