use hsal_core::graph::GraphConfig;
use hsal_core::io::PointCloud;
use hsal_core::land::{LandConfig, LandModel};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let n: usize = std::env::args().nth(1).map_or(7138, |s| s.parse().unwrap());
    let d = 40;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let centers: Vec<Vec<f64>> = (0..6).map(|_| (0..d).map(|_| rng.random::<f64>() * 4.0).collect()).collect();
    let mut pts = Array2::zeros((n, d));
    for i in 0..n {
        let c = &centers[i % 6];
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            pts[[i, j]] = c[j] + 0.5 * z;
        }
    }
    let cloud = PointCloud::new(pts).unwrap();
    let model = LandModel::fit(&cloud, &LandConfig { graph: GraphConfig::default(), ..Default::default() }).unwrap();
    println!("{:#?}", model.diagnostics);
    println!("{:?}", &model.spectrum.eigenvalues[..8]);
}
