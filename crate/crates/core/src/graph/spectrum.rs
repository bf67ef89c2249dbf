//! Leading eigenpairs of the transition matrix.
//!
//! `P = D^-1 W` is similar to the symmetric `S = D^-1/2 W D^-1/2`, so we run
//! Lanczos with full reorthogonalization on `S` and map each eigenvector `v`
//! back to a right eigenvector `psi = D^-1/2 v` of `P`. With `v` orthonormal,
//! the diffusion distance realized by these `psi` equals the weighted `P^t`
//! row distance `sum_m (P^t_im - P^t_jm)^2 / deg_m`.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::markov::MarkovGraph;
use super::GraphError;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenConfig {
    /// Required residual `|S v - lambda v|` for every returned pair.
    pub tol: f64,
    /// Krylov dimension cap as a multiple of the number of requested pairs.
    pub iteration_factor: usize,
    pub seed: u64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            iteration_factor: 10,
            seed: 0x5eed,
        }
    }
}

/// Eigenpairs of `P` ordered by decreasing `|lambda|` (ties: larger `lambda` first).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub eigenvalues: Vec<T>,
    /// `n x M`; column `l` is the right eigenvector `psi_l`.
    pub eigenvectors: Array2<T>,
    /// Residual `|S v - lambda v|` of each pair.
    pub residuals: Vec<T>,
    /// Krylov dimension used.
    pub krylov_dim: usize,
}

impl<T: Real> Spectrum<T> {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Keeps the leading `m` pairs.
    pub fn truncate(&self, m: usize) -> Self {
        let m = m.min(self.len());
        Self {
            eigenvalues: self.eigenvalues[..m].to_vec(),
            eigenvectors: self.eigenvectors.slice(ndarray::s![.., ..m]).to_owned(),
            residuals: self.residuals[..m].to_vec(),
            krylov_dim: self.krylov_dim,
        }
    }
}

pub fn truncated_spectrum<T: Real>(graph: &MarkovGraph<T>, m: usize) -> Result<Spectrum<T>, GraphError> {
    truncated_spectrum_with(graph, m, &EigenConfig::default())
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn normalize<T: Real>(v: &mut [T]) -> T {
    let norm = dot(v, v).sqrt();
    if norm > T::zero() {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Two passes of classical Gram-Schmidt against the whole basis.
fn reorthogonalize<T: Real>(w: &mut [T], basis: &[Vec<T>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
    }
}

struct SymmetricOperator<'a, T> {
    graph: &'a MarkovGraph<T>,
    inv_sqrt_deg: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Real> SymmetricOperator<'_, T> {
    fn apply(&mut self, x: &[T], y: &mut [T]) {
        for ((s, &xi), &d) in self.scratch.iter_mut().zip(x).zip(&self.inv_sqrt_deg) {
            *s = xi * d;
        }
        self.graph.w.matvec(&self.scratch, y);
        for (yi, &d) in y.iter_mut().zip(&self.inv_sqrt_deg) {
            *yi *= d;
        }
    }
}

/// Indices of the `m` largest-magnitude values, magnitude descending, larger value first on ties.
///
/// Magnitudes are compared after rounding to a 2^-40 grid, so `+1` and a
/// `-1` carrying rounding noise count as tied and `+1` leads.
fn leading_by_magnitude<T: Real>(values: &[T], m: usize) -> Vec<usize> {
    let grid = T::lit(2f64.powi(40));
    let key = |x: T| (x.abs() * grid).round();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (values[a], values[b]);
        key(y)
            .partial_cmp(&key(x))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });
    order.truncate(m);
    order
}

/// Ritz pairs of one Lanczos run, leading by magnitude.
struct RunResult<T> {
    values: Vec<T>,
    vectors: Vec<Vec<T>>,
    krylov_dim: usize,
}

/// One Lanczos run on `S` restricted to the complement of `locked`.
///
/// Stops when the leading `m` Ritz pairs have estimated residuals below
/// `tol / 4`, or after `cap` steps.
fn lanczos_run<T: Real>(
    op: &mut SymmetricOperator<'_, T>,
    locked: &[Vec<T>],
    m: usize,
    cap: usize,
    tol: T,
    rng: &mut ChaCha8Rng,
) -> Option<RunResult<T>> {
    let n = op.inv_sqrt_deg.len();
    let breakdown = T::lit(1e-12);
    let mut random_unit = |basis: &[Vec<T>]| -> Option<Vec<T>> {
        for _ in 0..3 {
            let mut v: Vec<T> = (0..n).map(|_| T::lit(StandardNormal.sample(&mut *rng))).collect();
            reorthogonalize(&mut v, locked);
            reorthogonalize(&mut v, basis);
            if normalize(&mut v) > T::lit(1e-8) {
                return Some(v);
            }
        }
        None
    };

    let mut basis: Vec<Vec<T>> = Vec::with_capacity(cap);
    let mut alpha: Vec<T> = Vec::with_capacity(cap);
    let mut beta: Vec<T> = Vec::with_capacity(cap);
    let mut q = random_unit(&basis)?;
    let check_stride = (m / 2).max(10);
    let mut next_check = m.min(cap);
    let mut w = vec![T::zero(); n];

    loop {
        op.apply(&q, &mut w);
        let a = dot(&q, &w);
        axpy(-a, &q, &mut w);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            axpy(-b, prev, &mut w);
        }
        basis.push(q);
        reorthogonalize(&mut w, locked);
        reorthogonalize(&mut w, &basis);
        alpha.push(a);
        let b = dot(&w, &w).sqrt();
        let size = basis.len();
        if size >= cap {
            break;
        }
        if size >= next_check {
            next_check = size + check_stride;
            let (theta, last_row) = tridiagonal_eigen_last_row(&alpha, &beta);
            let converged = leading_by_magnitude(&theta, m)
                .iter()
                .all(|&i| (b * last_row[i]).abs() <= tol * T::lit(0.25));
            if converged {
                break;
            }
        }
        if b > breakdown {
            q = w.iter().map(|&x| x / b).collect();
            beta.push(b);
        } else {
            // invariant subspace found: restart orthogonally, decoupling the tridiagonal
            beta.push(T::zero());
            match random_unit(&basis) {
                Some(v) => q = v,
                None => break,
            }
        }
    }

    let size = basis.len();
    let (theta, coeffs) = tridiagonal_eigen(&alpha, &beta);
    let picked = leading_by_magnitude(&theta, m);
    let vectors = picked
        .iter()
        .map(|&i| {
            let mut v = vec![T::zero(); n];
            for (j, qj) in basis.iter().enumerate() {
                axpy(coeffs[[j, i]], qj, &mut v);
            }
            reorthogonalize(&mut v, locked);
            normalize(&mut v);
            v
        })
        .collect();
    Some(RunResult {
        values: picked.iter().map(|&i| theta[i]).collect(),
        vectors,
        krylov_dim: size,
    })
}

fn residual<T: Real>(op: &mut SymmetricOperator<'_, T>, lambda: T, v: &[T], scratch: &mut [T]) -> T {
    op.apply(v, scratch);
    scratch.iter().zip(v).map(|(&a, &b)| (a - lambda * b) * (a - lambda * b)).sum::<T>().sqrt()
}

pub fn truncated_spectrum_with<T: Real>(
    graph: &MarkovGraph<T>,
    m: usize,
    config: &EigenConfig,
) -> Result<Spectrum<T>, GraphError> {
    let n = graph.n();
    if m == 0 || m > n {
        return Err(GraphError::Invalid(format!("requested {m} eigenpairs of a {n}-vertex graph")));
    }
    if let Some(v) = graph.deg.iter().position(|&d| !(d > T::zero())) {
        return Err(GraphError::IsolatedVertex(v));
    }
    let mut op = SymmetricOperator {
        graph,
        inv_sqrt_deg: graph.deg.iter().map(|&d| T::one() / d.sqrt()).collect(),
        scratch: vec![T::zero(); n],
    };
    let cap = n.min((config.iteration_factor * m).max(m));
    let tol = T::lit(config.tol);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let first = lanczos_run(&mut op, &[], m, cap, tol, &mut rng).ok_or(GraphError::NoConvergence {
        requested: m,
        residuals: vec![],
    })?;
    let mut krylov_dim = first.krylov_dim;
    let mut values = first.values;
    let mut locked = first.vectors;
    if values.len() < m {
        return Err(GraphError::NoConvergence { requested: m, residuals: vec![] });
    }

    // A single Krylov sequence sees one copy of each repeated eigenvalue (e.g.
    // lambda = 1 once per connected component). Search the complement of the
    // converged vectors until it holds nothing as large as the m-th pair.
    let grid = T::lit(2f64.powi(40));
    while locked.len() < n {
        let floor = (values[m - 1].abs() * grid).round();
        let extra_cap = (n - locked.len()).min(cap);
        let Some(extra) = lanczos_run(&mut op, &locked, 1, extra_cap, tol, &mut rng) else { break };
        krylov_dim += extra.krylov_dim;
        let (lambda, v) = (extra.values[0], extra.vectors.into_iter().next().expect("one pair"));
        if (lambda.abs() * grid).round() < floor {
            break;
        }
        let mut scratch = vec![T::zero(); n];
        if residual(&mut op, lambda, &v, &mut scratch) > tol {
            break;
        }
        values.push(lambda);
        locked.push(v);
        let keep = leading_by_magnitude(&values, values.len());
        values = keep.iter().map(|&i| values[i]).collect();
        locked = keep.iter().map(|&i| locked[i].clone()).collect();
    }
    let order = leading_by_magnitude(&values, m);

    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenvectors = Array2::zeros((n, m));
    let mut residuals = Vec::with_capacity(m);
    let mut sv = vec![T::zero(); n];
    for (col, &i) in order.iter().enumerate() {
        let (lambda, v) = (values[i], &locked[i]);
        residuals.push(residual(&mut op, lambda, v, &mut sv));
        let mut psi: Vec<T> = v.iter().zip(&op.inv_sqrt_deg).map(|(&x, &d)| x * d).collect();
        // sign convention: largest-magnitude entry positive
        let pivot = psi.iter().enumerate().fold(0, |best, (k, x)| if x.abs() > psi[best].abs() { k } else { best });
        if psi[pivot] < T::zero() {
            psi.iter_mut().for_each(|x| *x = -*x);
        }
        for (row, x) in psi.into_iter().enumerate() {
            eigenvectors[[row, col]] = x;
        }
        eigenvalues.push(lambda);
    }
    if residuals.iter().any(|&r| !(r <= tol)) {
        return Err(GraphError::NoConvergence {
            requested: m,
            residuals: residuals.iter().map(|r| r.as_f64()).collect(),
        });
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        residuals,
        krylov_dim,
    })
}

/// Eigenvalues and eigenvectors (as columns) of the symmetric tridiagonal matrix
/// with diagonal `diag` and off-diagonal `off` (`off.len() == diag.len() - 1`).
pub fn tridiagonal_eigen<T: Real>(diag: &[T], off: &[T]) -> (Vec<T>, Array2<T>) {
    let n = diag.len();
    let mut rows: Vec<Vec<T>> = (0..n)
        .map(|r| (0..n).map(|c| if r == c { T::one() } else { T::zero() }).collect())
        .collect();
    let d = implicit_ql(diag, off, &mut rows);
    let mut vectors = Array2::zeros((n, n));
    for (r, row) in rows.into_iter().enumerate() {
        for (c, x) in row.into_iter().enumerate() {
            vectors[[r, c]] = x;
        }
    }
    (d, vectors)
}

/// Eigenvalues plus only the last component of each eigenvector (enough for Lanczos residual estimates).
fn tridiagonal_eigen_last_row<T: Real>(diag: &[T], off: &[T]) -> (Vec<T>, Vec<T>) {
    let n = diag.len();
    let mut rows = vec![(0..n).map(|c| if c == n - 1 { T::one() } else { T::zero() }).collect::<Vec<T>>()];
    let d = implicit_ql(diag, off, &mut rows);
    (d, rows.pop().expect("one row"))
}

/// Implicit QL iteration with Wilkinson shifts (after EISPACK `tql2`).
///
/// Each entry of `rows` is a row of the accumulated transform; pass identity rows
/// to obtain eigenvectors as columns.
fn implicit_ql<T: Real>(diag: &[T], off: &[T], rows: &mut [Vec<T>]) -> Vec<T> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let eps = T::epsilon();
    let two = T::lit(2.0);
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    break;
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in rows.iter_mut() {
                        let h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    d
}
