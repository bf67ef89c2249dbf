use ndarray::Array2;

use super::spectrum::Spectrum;
use crate::scalar::{squared_distance, Real};

/// Diffusion map coordinates `phi[i][l] = lambda_l^t * psi_l(i)`.
///
/// Euclidean distance between two rows is the diffusion distance `D_t`
/// truncated to the retained eigenpairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionCoords<T> {
    pub coords: Array2<T>,
    pub t: u32,
}

impl<T: Real> DiffusionCoords<T> {
    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        let m = self.coords.ncols();
        &self.coords.as_slice().expect("standard layout")[i * m..(i + 1) * m]
    }

    /// `D_t(x_i, x_j)`.
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> T {
        diffusion_distance(self, i, j)
    }
}

/// Signed powers: `lambda^t` keeps the sign of `lambda` for odd `t`.
pub fn diffusion_embedding<T: Real>(spectrum: &Spectrum<T>, t: u32) -> DiffusionCoords<T> {
    assert!(t >= 1, "diffusion time must be >= 1");
    let scale: Vec<T> = spectrum.eigenvalues.iter().map(|l| l.powi(t as i32)).collect();
    let mut coords = spectrum.eigenvectors.as_standard_layout().into_owned();
    for mut row in coords.rows_mut() {
        for (x, &s) in row.iter_mut().zip(&scale) {
            *x *= s;
        }
    }
    DiffusionCoords { coords, t }
}

pub fn diffusion_distance<T: Real>(coords: &DiffusionCoords<T>, i: usize, j: usize) -> T {
    squared_distance(coords.row(i), coords.row(j)).sqrt()
}
