use std::cmp::Ordering;

use rayon::prelude::*;

use crate::graph::{DiffusionCoords, KnnIndex};
use crate::scalar::{squared_distance, Real};

/// Unnormalized Gaussian kernel density over each point's k neighbors (self excluded).
pub fn kde<T: Real>(index: &KnnIndex<T>, sigma0: T) -> Vec<T> {
    let inv = T::one() / (sigma0 * sigma0);
    (0..index.n())
        .map(|i| index.squared_distances(i).iter().map(|&d2| (-d2 * inv).exp()).sum())
        .collect()
}

/// `true` when `a` is strictly denser than `b`: higher density, or equal density and smaller index.
#[inline]
pub fn denser<T: Real>(density: &[T], a: usize, b: usize) -> bool {
    density[a] > density[b] || (density[a] == density[b] && a < b)
}

/// Points sorted densest first under the strict (density, index) order.
pub fn density_order<T: Real>(density: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..density.len()).collect();
    order.sort_by(|&a, &b| {
        density[b]
            .partial_cmp(&density[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// For every point, its `D_t`-nearest strictly denser point.
///
/// The densest point has no parent. Distance ties go to the smaller index.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityForest<T> {
    /// Densest first.
    pub order: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    pub parent_distance: Vec<T>,
}

impl<T: Real> DensityForest<T> {
    pub fn build(coords: &DiffusionCoords<T>, density: &[T]) -> Self {
        let n = density.len();
        assert_eq!(coords.n(), n, "coords and density disagree on n");
        let order = density_order(density);
        let nearest: Vec<(Option<usize>, T)> = (0..n)
            .into_par_iter()
            .map(|rank| {
                let i = order[rank];
                let xi = coords.row(i);
                let mut best: Option<(T, usize)> = None;
                for &j in &order[..rank] {
                    let d2 = squared_distance(xi, coords.row(j));
                    let better = match best {
                        None => true,
                        Some((bd, bj)) => d2 < bd || (d2 == bd && j < bj),
                    };
                    if better {
                        best = Some((d2, j));
                    }
                }
                match best {
                    Some((d2, j)) => (Some(j), d2.sqrt()),
                    None => (None, T::zero()),
                }
            })
            .collect();
        let mut parent = vec![None; n];
        let mut parent_distance = vec![T::zero(); n];
        for (rank, (p, d)) in nearest.into_iter().enumerate() {
            parent[order[rank]] = p;
            parent_distance[order[rank]] = d;
        }
        Self {
            order,
            parent,
            parent_distance,
        }
    }

    pub fn root(&self) -> usize {
        self.order[0]
    }
}

/// `rho_t`: diffusion distance to the nearest strictly denser point, or for the
/// densest point the largest diffusion distance to any point.
pub fn rho_from_forest<T: Real>(coords: &DiffusionCoords<T>, forest: &DensityForest<T>) -> Vec<T> {
    let mut rho = forest.parent_distance.clone();
    let root = forest.root();
    rho[root] = (0..coords.n())
        .map(|j| coords.distance(root, j))
        .fold(T::zero(), T::max);
    rho
}

pub fn rho_t<T: Real>(coords: &DiffusionCoords<T>, density: &[T]) -> Vec<T> {
    rho_from_forest(coords, &DensityForest::build(coords, density))
}

/// Density, `rho_t`, their product, and the resulting query order.
#[derive(Debug, Clone, PartialEq)]
pub struct LandScores<T> {
    pub density: Vec<T>,
    pub rho: Vec<T>,
    pub score: Vec<T>,
    /// Indices sorted by descending score, ties to the smaller index.
    pub query_order: Vec<usize>,
}

pub fn land_scores<T: Real>(density: &[T], rho: &[T]) -> LandScores<T> {
    assert_eq!(density.len(), rho.len(), "density and rho lengths differ");
    let score: Vec<T> = density.iter().zip(rho).map(|(&p, &r)| p * r).collect();
    let mut query_order: Vec<usize> = (0..score.len()).collect();
    query_order.sort_by(|&a, &b| score[b].partial_cmp(&score[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    LandScores {
        density: density.to_vec(),
        rho: rho.to_vec(),
        score,
        query_order,
    }
}
