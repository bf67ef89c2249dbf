//! Brute-force reference implementations and the check suites shared by the
//! integration tests and the acceptance runner.

#![allow(dead_code)]

use hsal_core::experiment::{overall_accuracy, random_baseline};
use hsal_core::graph::{
    diffusion_embedding, kernel_weights, knn_index, markov_matrix, resolve_scales, truncated_spectrum,
    DiffusionCoords, GraphConfig, MarkovGraph, Spectrum,
};
use hsal_core::io::{LabelMap, PointCloud};
use hsal_core::land::{kde, land_scores, propagate, rho_t, DensityForest, GroundTruthOracle, LabelState, LandConfig, LandModel};
use hsal_core::synthetic::three_clusters;
use hsal_core::vae::{gradients, loss, VaeArchitecture, VaeParams};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- fixtures

/// Random cloud; with `grid` the coordinates are small integers so that exact
/// distance ties and duplicate points occur.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize, grid: bool) -> PointCloud<f64> {
    let pts = Array2::from_shape_fn((n, dim), |_| {
        if grid {
            rng.random_range(0..4) as f64
        } else {
            rng.random::<f64>() * 10.0
        }
    });
    PointCloud::new(pts).unwrap()
}

pub struct Instance {
    pub cloud: PointCloud<f64>,
    pub k: usize,
    pub t: u32,
    pub graph: MarkovGraph<f64>,
    pub sigma0: f64,
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(8..=64);
    let dim = rng.random_range(1..=5);
    let grid = seed % 5 == 0;
    let cloud = random_cloud(&mut rng, n, dim, grid);
    let mut k = rng.random_range(1..=(n - 1).min(10));
    let t = rng.random_range(1..=4);
    // duplicate grid points can make every k-th distance zero, or sigma so small
    // that a far point's weights all underflow; widen k until neither happens
    let (graph, sigma0) = loop {
        let index = knn_index(&cloud, k).unwrap();
        let built = resolve_scales(&index, &GraphConfig { k, ..GraphConfig::default() })
            .and_then(|(sigma, sigma0)| Ok((markov_matrix(kernel_weights(&index, sigma))?, sigma0)));
        match built {
            Ok(found) => break found,
            Err(_) if k < n - 1 => k += 1,
            Err(e) => panic!("seed {seed}: {e}"),
        }
    };
    Instance { cloud, k, t, graph, sigma0 }
}

// ---------------------------------------------------------------- oracles

/// All other points sorted by (distance, index), truncated to k.
pub fn brute_neighbors(cloud: &PointCloud<f64>, i: usize, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..cloud.n())
        .filter(|&j| j != i)
        .map(|j| {
            let d2: f64 = cloud.row(i).iter().zip(cloud.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            (j, d2)
        })
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn brute_kde(cloud: &PointCloud<f64>, k: usize, sigma0: f64) -> Vec<f64> {
    (0..cloud.n())
        .map(|i| brute_neighbors(cloud, i, k).iter().map(|&(_, d2)| (-d2 / (sigma0 * sigma0)).exp()).sum())
        .collect()
}

fn coord_distance(coords: &DiffusionCoords<f64>, i: usize, j: usize) -> f64 {
    coord_distance2(coords, i, j).sqrt()
}

/// Squared distance; nearest-point searches compare these so that `sqrt`
/// rounding cannot merge two distinct candidates into a tie.
fn coord_distance2(coords: &DiffusionCoords<f64>, i: usize, j: usize) -> f64 {
    let (a, b) = (coords.coords.row(i), coords.coords.row(j));
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

fn strictly_denser(p: &[f64], y: usize, x: usize) -> bool {
    p[y] > p[x] || (p[y] == p[x] && y < x)
}

/// Literal nearest-denser / farthest-point definition.
pub fn brute_rho(coords: &DiffusionCoords<f64>, p: &[f64]) -> Vec<f64> {
    let n = p.len();
    (0..n)
        .map(|x| {
            let denser: Vec<usize> = (0..n).filter(|&y| y != x && strictly_denser(p, y, x)).collect();
            if denser.is_empty() {
                (0..n).map(|y| coord_distance(coords, x, y)).fold(0.0, f64::max)
            } else {
                denser.iter().map(|&y| coord_distance(coords, x, y)).fold(f64::INFINITY, f64::min)
            }
        })
        .collect()
}

/// Literal density-descending pass: each unlabeled point takes the label of
/// the nearest point that is strictly denser and labeled at visit time, else
/// of the nearest labeled point.
pub fn brute_propagate(y0: &[u32], p: &[f64], coords: &DiffusionCoords<f64>) -> Vec<u32> {
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        if a == b {
            std::cmp::Ordering::Equal
        } else if strictly_denser(p, a, b) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });
    let mut y = y0.to_vec();
    for &x in &order {
        if y[x] != 0 {
            continue;
        }
        let nearest = |cands: Vec<usize>| {
            cands
                .into_iter()
                .map(|c| (coord_distance2(coords, x, c), c))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, c)| c)
        };
        let donor = nearest((0..n).filter(|&c| y[c] != 0 && strictly_denser(p, c, x)).collect())
            .or_else(|| nearest((0..n).filter(|&c| y[c] != 0).collect()))
            .expect("at least one label");
        y[x] = y[donor];
    }
    y
}

pub fn dense_w(graph: &MarkovGraph<f64>) -> DMatrix<f64> {
    let n = graph.n();
    let mut w = DMatrix::zeros(n, n);
    for (i, j, v) in graph.w.triplets() {
        w[(i, j)] = v;
    }
    w
}

/// Eigenvalues of `D^-1/2 W D^-1/2` by dense symmetric decomposition, with
/// eigenvectors mapped to `D^-1/2 v`, ordered by |lambda| descending.
pub fn dense_spectrum(graph: &MarkovGraph<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = graph.n();
    let w = dense_w(graph);
    let deg: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| w[(i, j)] / (deg[i] * deg[j]).sqrt());
    let eig = SymmetricEigen::new(s);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        let (la, lb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        lb.abs().total_cmp(&la.abs()).then(lb.total_cmp(&la))
    });
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let psi = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])] / deg[r].sqrt());
    (values, psi)
}

/// `D_t(i, j)^2 = sum_m (P^t_im - P^t_jm)^2 / deg_m` with `P^t` a dense matrix power.
pub fn matrix_power_distances(graph: &MarkovGraph<f64>, t: u32) -> DMatrix<f64> {
    let n = graph.n();
    let w = dense_w(graph);
    let deg: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let p = DMatrix::from_fn(n, n, |i, j| w[(i, j)] / deg[i]);
    let mut pt = DMatrix::identity(n, n);
    for _ in 0..t {
        pt = &pt * &p;
    }
    DMatrix::from_fn(n, n, |i, j| (0..n).map(|m| (pt[(i, m)] - pt[(j, m)]).powi(2) / deg[m]).sum::<f64>())
}

// ---------------------------------------------------------------- suites

/// Absolute tolerance below magnitude 1, relative above.
fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// kde, rho_t, propagate and spectral diffusion distances against brute force.
pub fn oracle_suite(instances: u64) -> Check {
    let mut stats = [0usize; 5];
    for seed in 0..instances {
        let inst = instance(seed);
        let n = inst.cloud.n();
        let index = knn_index(&inst.cloud, inst.k).unwrap();

        for i in 0..n {
            let brute = brute_neighbors(&inst.cloud, i, inst.k);
            let ids: Vec<usize> = brute.iter().map(|b| b.0).collect();
            ensure(index.neighbors(i) == ids.as_slice(), || format!("seed {seed}: kNN of {i} differ"))?;
        }

        let p = kde(&index, inst.sigma0);
        let p_ref = brute_kde(&inst.cloud, inst.k, inst.sigma0);
        for i in 0..n {
            ensure(close(p[i], p_ref[i], 1e-12), || format!("seed {seed}: kde[{i}] {} vs {}", p[i], p_ref[i]))?;
        }
        stats[0] += 1;

        let spectrum = truncated_spectrum(&inst.graph, n).map_err(|e| format!("seed {seed}: {e}"))?;
        let (dense_values, dense_psi) = dense_spectrum(&inst.graph);
        let mut ours = spectrum.eigenvalues.clone();
        let mut theirs = dense_values.clone();
        ours.sort_by(f64::total_cmp);
        theirs.sort_by(f64::total_cmp);
        for (l, (a, b)) in ours.iter().zip(&theirs).enumerate() {
            ensure(close(*a, *b, 1e-8), || format!("seed {seed}: eigenvalue {l}: {a} vs {b}"))?;
        }

        let coords = diffusion_embedding(&spectrum, inst.t);
        let dpt = matrix_power_distances(&inst.graph, inst.t);
        for i in 0..n {
            for j in 0..n {
                let d2 = coords.distance(i, j).powi(2);
                ensure(close(d2, dpt[(i, j)], 1e-8), || {
                    format!("seed {seed}: D_t^2({i},{j}) {d2} vs matrix power {}", dpt[(i, j)])
                })?;
            }
        }
        stats[1] += 1;

        // truncated M: compare with the dense decomposition cut at a spectral gap
        let m = (1..n).find(|&m| m >= n / 3 && (dense_values[m - 1].abs() - dense_values[m].abs()) > 1e-6);
        if let Some(m) = m {
            let truncated = truncated_spectrum(&inst.graph, m).map_err(|e| format!("seed {seed}: {e}"))?;
            let tc = diffusion_embedding(&truncated, inst.t);
            let dense = dense_coords(&dense_values, &dense_psi, m, inst.t);
            for i in 0..n {
                for j in 0..i {
                    let (a, b) = (tc.distance(i, j), coord_distance(&dense, i, j));
                    ensure(close(a, b, 1e-8), || format!("seed {seed}: truncated D_t({i},{j}) {a} vs {b}"))?;
                }
            }
            stats[2] += 1;
        }

        let rho = rho_t(&coords, &p);
        let rho_ref = brute_rho(&coords, &p);
        for i in 0..n {
            ensure(close(rho[i], rho_ref[i], 1e-12), || format!("seed {seed}: rho[{i}] {} vs {}", rho[i], rho_ref[i]))?;
        }
        let scores = land_scores(&p, &rho);
        let brute_scores = land_scores(&p, &rho_ref);
        ensure(scores.query_order == brute_scores.query_order, || format!("seed {seed}: query order differs"))?;
        stats[3] += 1;

        let forest = DensityForest::build(&coords, &p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
        for _ in 0..4 {
            let mut y0 = vec![0u32; n];
            let labeled = rng.random_range(1..=n.min(6));
            for _ in 0..labeled {
                y0[rng.random_range(0..n)] = rng.random_range(1..=4);
            }
            let state = LabelState { y: y0.clone(), queried: vec![], declined: vec![], budget: 0, asked: 0 };
            let fast = propagate(&state, &forest, &coords).map_err(|e| e.to_string())?;
            let slow = brute_propagate(&y0, &p, &coords);
            ensure(fast.y == slow, || format!("seed {seed}: propagation differs\n fast {:?}\n slow {:?}", fast.y, slow))?;
        }
        stats[4] += 1;
    }
    Ok(format!(
        "{instances} instances: kde {} / spectrum+P^t {} / truncated {} / rho+order {} / propagate {}",
        stats[0], stats[1], stats[2], stats[3], stats[4]
    ))
}

pub fn dense_coords(values: &[f64], psi: &DMatrix<f64>, m: usize, t: u32) -> DiffusionCoords<f64> {
    let n = psi.nrows();
    DiffusionCoords {
        coords: Array2::from_shape_fn((n, m), |(i, l)| values[l].powi(t as i32) * psi[(i, l)]),
        t,
    }
}

/// Loss at `params` for fixed `x` and `noise`.
fn total_loss(params: &VaeParams<f64>, x: ArrayView2<f64>, noise: ArrayView2<f64>) -> f64 {
    let pass = hsal_core::vae::forward(params, x, noise).unwrap();
    loss(x, pass.mu.view(), pass.logvar.view(), pass.reconstruction.view()).total
}

/// He-initialized weights with random biases. Zero biases put pre-activations
/// exactly on the ReLU kink whenever a whole layer is inactive, where central
/// differences average the two one-sided slopes.
pub fn random_params(arch: &VaeArchitecture, seed: u64) -> VaeParams<f64> {
    let mut params = VaeParams::<f64>::init(arch, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
    for layer in params.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    }
    params
}

fn gradient_inputs(arch: &VaeArchitecture, seed: u64, batch: usize) -> (VaeParams<f64>, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_params(arch, seed);
    let x = Array2::from_shape_fn((batch, arch.input_dim), |_| rng.random::<f64>());
    let noise = Array2::from_shape_fn((batch, arch.latent_dim), |_| rng.random::<f64>() * 2.0 - 1.0);
    (params, x, noise)
}

fn affine(layer: &hsal_core::vae::Dense<f64>, x: &Array2<f64>) -> Array2<f64> {
    x.dot(&layer.weight.t()) + &layer.bias
}

/// Smallest `|pre-activation|` over every ReLU unit and sample of the inputs
/// [`gradient_check`] uses. Central differences are only valid when this
/// exceeds the step's effect on the pre-activations.
pub fn relu_margin(arch: &VaeArchitecture, seed: u64, batch: usize) -> f64 {
    let (params, x, noise) = gradient_inputs(arch, seed, batch);
    let mut margin = f64::INFINITY;
    let mut relu = |pre: Array2<f64>| {
        margin = pre.iter().fold(margin, |m, v| m.min(v.abs()));
        pre.mapv(|v| v.max(0.0))
    };
    let mut a = x;
    for layer in &params.encoder {
        a = relu(affine(layer, &a));
    }
    let (mu, logvar) = (affine(&params.mu_head, &a), affine(&params.logvar_head, &a));
    let mut z = &mu + &(logvar.mapv(|v| (0.5 * v).exp()) * &noise);
    for layer in &params.decoder {
        z = relu(affine(layer, &z));
    }
    margin
}

/// Largest relative error `|g - fd| / max(|g|, |fd|)` over whole-network gradient vectors.
pub fn gradient_check(arch: &VaeArchitecture, seed: u64, batch: usize, h: f64) -> f64 {
    let (params, x, noise) = gradient_inputs(arch, seed, batch);
    let (grads, _) = gradients(&params, x.view(), noise.view()).unwrap();
    let analytic = grads.values();
    let mut numeric = Vec::with_capacity(analytic.len());
    for k in 0..analytic.len() {
        let mut plus = params.clone();
        *plus.values_mut()[k] += h;
        let mut minus = params.clone();
        *minus.values_mut()[k] -= h;
        numeric.push((total_loss(&plus, x.view(), noise.view()) - total_loss(&minus, x.view(), noise.view())) / (2.0 * h));
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nb).max(f64::MIN_POSITIVE)
}

pub fn kl_of(mu: &[f64], logvar: &[f64]) -> f64 {
    let m = Array2::from_shape_vec((1, mu.len()), mu.to_vec()).unwrap();
    let lv = Array2::from_shape_vec((1, logvar.len()), logvar.to_vec()).unwrap();
    let zeros = Array2::zeros((1, 1));
    loss(zeros.view(), m.view(), lv.view(), zeros.view()).kl
}

/// Row-stochasticity, eigenvalue bounds, D_t monotonicity, KL sign, VAE
/// gradients, full-budget identity and the query-prefix property.
pub fn property_suite() -> Check {
    let mut worst_row = 0.0f64;
    let mut worst_eig = 0.0f64;
    let mut pairs = 0usize;
    for seed in 0..40 {
        let inst = instance(1000 + seed);
        let n = inst.graph.n();
        let p = inst.graph.p.to_dense();
        for i in 0..n {
            let s: f64 = p.row(i).sum();
            worst_row = worst_row.max((s - 1.0).abs());
            ensure(p.row(i).iter().all(|&v| v >= 0.0), || format!("seed {seed}: negative P entry"))?;
        }
        let spectrum = truncated_spectrum(&inst.graph, n.min(20)).map_err(|e| e.to_string())?;
        ensure(close(spectrum.eigenvalues[0], 1.0, 1e-10), || format!("seed {seed}: lambda_1 = {}", spectrum.eigenvalues[0]))?;
        for &l in &spectrum.eigenvalues {
            worst_eig = worst_eig.max(l.abs() - 1.0);
        }
        let coords: Vec<DiffusionCoords<f64>> = (1..=6).map(|t| diffusion_embedding(&spectrum, t)).collect();
        for i in 0..n {
            for j in 0..i {
                for t in 0..5 {
                    let (a, b) = (coords[t + 1].distance(i, j), coords[t].distance(i, j));
                    ensure(a <= b + 1e-12, || format!("seed {seed}: D_{}({i},{j}) = {a} > D_{} = {b}", t + 2, t + 1))?;
                    pairs += 1;
                }
            }
        }
    }
    ensure(worst_row <= 1e-12, || format!("row sum deviation {worst_row:e}"))?;
    ensure(worst_eig <= 1e-10, || format!("|lambda| exceeds 1 by {worst_eig:e}"))?;

    ensure(kl_of(&[0.0; 3], &[0.0; 3]) == 0.0, || "KL at (0, 0) is not 0".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lv: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        ensure(kl_of(&mu, &lv) > 0.0, || format!("KL not positive at {mu:?}, {lv:?}"))?;
    }
    ensure(kl_of(&[1e-3, 0.0], &[0.0, 0.0]) > 0.0, || "KL zero away from origin".into())?;
    ensure(kl_of(&[0.0, 0.0], &[0.0, -1e-3]) > 0.0, || "KL zero away from origin".into())?;

    let mut worst_grad = 0.0f64;
    for seed in 0..10 {
        let arch = VaeArchitecture::symmetric(5, vec![4, 3], 2);
        worst_grad = worst_grad.max(gradient_check(&arch, seed, 6, 1e-5));
        let arch = VaeArchitecture::symmetric(6, vec![5], 3);
        worst_grad = worst_grad.max(gradient_check(&arch, 100 + seed, 4, 1e-5));
    }
    ensure(worst_grad <= 1e-5, || format!("gradient relative error {worst_grad:e}"))?;

    let data = three_clusters::<f64>(11);
    let config = synthetic_config();
    let model = LandModel::fit(&data.cloud, &config).map_err(|e| e.to_string())?;
    let state = model.query(&mut GroundTruthOracle::new(&data.truth), data.cloud.n()).map_err(|e| e.to_string())?;
    let out = model.propagate(&state).map_err(|e| e.to_string())?;
    ensure(out.y == data.truth.labels && state.y == out.y, || "full budget propagation changed labels".into())?;

    let big = hsal_core::synthetic::gaussian_clusters::<f64>(
        &[vec![0.0, 0.0, 0.0], vec![8.0, 0.0, 0.0], vec![0.0, 8.0, 0.0], vec![0.0, 0.0, 8.0]],
        120,
        1.0,
        5,
    );
    let model = LandModel::fit(&big.cloud, &synthetic_config()).map_err(|e| e.to_string())?;
    let mut oracle = GroundTruthOracle::new(&big.truth);
    let q10 = model.query(&mut oracle, 10).map_err(|e| e.to_string())?;
    let q400 = model.query(&mut oracle, 400).map_err(|e| e.to_string())?;
    ensure(q400.queried[..10] == q10.queried[..], || "B=10 queries are not a prefix of B=400".into())?;

    Ok(format!(
        "row dev {worst_row:.1e}, |lambda|-1 {worst_eig:.1e}, {pairs} D_t pairs, grad rel err {worst_grad:.1e}"
    ))
}

pub fn synthetic_config() -> LandConfig {
    LandConfig {
        graph: GraphConfig { k: 20, num_eigs: 20, t: 30, ..GraphConfig::default() },
        ..LandConfig::default()
    }
}

/// Three separated clusters, B = 3: perfect accuracy and one query per cluster.
pub fn synthetic_suite(seeds: u64) -> Check {
    let mut random_means = Vec::new();
    for seed in 0..seeds {
        let data = three_clusters::<f64>(seed);
        let (labels, model) = hsal_core::land::run_pipeline(&data.cloud, &synthetic_config(), &mut GroundTruthOracle::new(&data.truth), 3)
            .map_err(|e| e.to_string())?;
        let acc = overall_accuracy(&labels.y, &data.truth).map_err(|e| e.to_string())?;
        ensure(acc == 1.0, || format!("seed {seed}: accuracy {acc}"))?;
        let mut clusters: Vec<u32> = labels.queried.iter().map(|&i| data.truth.labels[i]).collect();
        clusters.sort_unstable();
        clusters.dedup();
        ensure(clusters.len() == 3, || format!("seed {seed}: queries {:?} hit {clusters:?}", labels.queried))?;
        let random = random_baseline(&model, &data.truth, 3, seed, 100).map_err(|e| e.to_string())?;
        ensure(random.mean < acc, || format!("seed {seed}: random mean {} not below {acc}", random.mean))?;
        random_means.push(random.mean);
    }
    Ok(format!("{seeds} fixtures at 100%; random B=3 means {random_means:.3?}"))
}

pub fn truth_of(labels: &[u32]) -> LabelMap {
    LabelMap::new(labels.to_vec()).unwrap()
}

pub fn spectrum_of(inst: &Instance, m: usize) -> Spectrum<f64> {
    truncated_spectrum(&inst.graph, m).unwrap()
}
