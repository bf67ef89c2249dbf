//! Seeded Gaussian-cluster fixtures for tests, examples and demos.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::io::{LabelMap, PointCloud};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct Labeled<T> {
    pub cloud: PointCloud<T>,
    pub truth: LabelMap,
}

/// `per_cluster` isotropic Gaussian samples around each center, cluster `c`
/// labeled `c + 1`, stored cluster by cluster.
pub fn gaussian_clusters<T: Real>(centers: &[Vec<f64>], per_cluster: usize, spread: f64, seed: u64) -> Labeled<T> {
    assert!(!centers.is_empty() && per_cluster > 0, "need at least one cluster and one point");
    let dim = centers[0].len();
    let n = centers.len() * per_cluster;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        assert_eq!(center.len(), dim, "centers differ in dimension");
        for k in 0..per_cluster {
            let i = c * per_cluster + k;
            for (j, &mu) in center.iter().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                points[[i, j]] = T::lit(mu + spread * z);
            }
            labels.push(c as u32 + 1);
        }
    }
    Labeled {
        cloud: PointCloud::new(points).expect("finite samples"),
        truth: LabelMap::new(labels).expect("nonzero labels"),
    }
}

/// Three well separated unit-variance clusters of 100 points in the plane.
pub fn three_clusters<T: Real>(seed: u64) -> Labeled<T> {
    let centers = [vec![0.0, 0.0], vec![12.0, 0.0], vec![6.0, 10.0]];
    gaussian_clusters(&centers, 100, 1.0, seed)
}
