use std::cmp::Ordering;

use rayon::prelude::*;

use super::GraphError;
use crate::io::PointCloud;
use crate::scalar::{squared_distance, Real};

/// Exact k nearest neighbors of every point (self excluded), ascending by
/// distance with ties broken by the smaller index.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnIndex<T> {
    k: usize,
    indices: Vec<usize>,
    sq_distances: Vec<T>,
}

impl<T: Real> KnnIndex<T> {
    /// Assembles an index from per-point neighbor rows (already sorted).
    pub fn from_rows(k: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self, GraphError> {
        let mut indices = Vec::with_capacity(rows.len() * k);
        let mut sq_distances = Vec::with_capacity(rows.len() * k);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != k {
                return Err(GraphError::Invalid(format!("row {i} has {} neighbors, expected {k}", row.len())));
            }
            for (j, d) in row {
                if j == i {
                    return Err(GraphError::Invalid(format!("point {i} lists itself as a neighbor")));
                }
                indices.push(j);
                sq_distances.push(d);
            }
        }
        Ok(Self { k, indices, sq_distances })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        if self.k == 0 { 0 } else { self.indices.len() / self.k }
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn squared_distances(&self, i: usize) -> &[T] {
        &self.sq_distances[i * self.k..(i + 1) * self.k]
    }

    pub fn distance(&self, i: usize, rank: usize) -> T {
        self.sq_distances[i * self.k + rank].sqrt()
    }

    /// Euclidean distance to the k-th (farthest kept) neighbor.
    pub fn kth_distance(&self, i: usize) -> T {
        self.distance(i, self.k - 1)
    }
}

#[inline]
fn by_distance_then_index<T: Real>(a: &(T, usize), b: &(T, usize)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Brute-force exact kNN search.
pub fn knn_index<T: Real>(cloud: &PointCloud<T>, k: usize) -> Result<KnnIndex<T>, GraphError> {
    let n = cloud.n();
    if k == 0 || k >= n {
        return Err(GraphError::NeighborCount { k, n });
    }
    let rows: Vec<Vec<(T, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = cloud.row(i);
            let mut cand: Vec<(T, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(xi, cloud.row(j)), j))
                .collect();
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, by_distance_then_index);
                cand.truncate(k);
            }
            cand.sort_unstable_by(by_distance_then_index);
            cand
        })
        .collect();
    let mut indices = Vec::with_capacity(n * k);
    let mut sq_distances = Vec::with_capacity(n * k);
    for row in rows {
        for (d, j) in row {
            indices.push(j);
            sq_distances.push(d);
        }
    }
    Ok(KnnIndex { k, indices, sq_distances })
}
