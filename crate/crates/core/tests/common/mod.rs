//! Shared random instances and independent linear-algebra oracles.
#![allow(dead_code)]

use nalgebra::DMatrix;
use orthant::mmatrix::{Matrix, RoutingMatrix};
use orthant::skorohod::{TimeGrid, VectorPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), m.entries())
}

pub fn spectral_radius_oracle(m: &Matrix) -> f64 {
    to_dmatrix(m)
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// `(I - Pᵗ)⁻¹` by LU.
pub fn r_inverse_oracle(p: &Matrix) -> DMatrix<f64> {
    let n = p.dim();
    let r = DMatrix::identity(n, n) - to_dmatrix(p).transpose();
    r.try_inverse().expect("M-matrix is invertible")
}

pub fn apply(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

/// Random nonnegative matrix with entries below 1, scaled down when its
/// spectral radius exceeds a target drawn from `[0, max_rho]`.
pub fn random_p(rng: &mut ChaCha8Rng, n: usize, max_rho: f64, zero_diagonal: bool) -> Matrix {
    let density: f64 = rng.random_range(0.2..1.0);
    let mut p = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if (zero_diagonal && i == j) || rng.random::<f64>() > density {
                continue;
            }
            p.set(i, j, rng.random_range(0.0..1.0));
        }
    }
    let rho = spectral_radius_oracle(&p);
    let target = rng.random_range(0.0..max_rho);
    if rho > target {
        for v in p.entries_mut() {
            *v *= target / rho;
        }
    }
    p
}

pub fn random_grid(rng: &mut ChaCha8Rng, len: usize) -> TimeGrid {
    let horizon: f64 = rng.random_range(1.0..50.0);
    let dt = horizon / (len - 1).max(1) as f64;
    let mut t = 0.0;
    let times = (0..len)
        .map(|k| {
            if k > 0 {
                t += dt * rng.random_range(0.5..1.5);
            }
            t
        })
        .collect();
    TimeGrid::from_times(times).unwrap()
}

/// Random walk with bounded i.i.d. increments, occasional jumps and a
/// starting point of either sign.
pub fn random_path(rng: &mut ChaCha8Rng, grid: TimeGrid, n: usize) -> VectorPath {
    let drift: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.5)).collect();
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
    let mut prev = 0.0;
    let mut first = true;
    VectorPath::from_fn(grid, n, |t, out| {
        if !first {
            let dt: f64 = t - prev;
            for i in 0..n {
                let u: f64 = rng.random_range(-1.732..1.732);
                x[i] += drift[i] * dt + sigma[i] * dt.sqrt() * u;
                if rng.random::<f64>() < 0.01 {
                    x[i] += rng.random_range(-2.0..2.0);
                }
            }
        }
        first = false;
        prev = t;
        out.copy_from_slice(&x);
    })
    .unwrap()
}

pub struct Instance {
    pub x: VectorPath,
    pub routing: RoutingMatrix,
    pub rinv: DMatrix<f64>,
}

/// Instance `seed`: dimension 1 to 5, 2 to `max_len` grid points and
/// spectral radius at most 0.9.
pub fn instance(seed: u64, max_len: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=5);
    let len = rng.random_range(2..=max_len);
    let p = random_p(&mut rng, n, 0.9, false);
    let grid = random_grid(&mut rng, len);
    let x = random_path(&mut rng, grid, n);
    let rinv = r_inverse_oracle(&p);
    Instance {
        x,
        routing: RoutingMatrix::new(p).unwrap(),
        rinv,
    }
}

/// Largest entrywise gap `|a - b|` between two paths.
pub fn sup_gap(a: &VectorPath, b: &VectorPath) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0, |m, (u, v)| m.max((u - v).abs()))
}

/// Time-dependent coefficients with `P(t) ≤ Π` entrywise: each routing entry
/// oscillates between half and all of its bound, and the drift oscillates
/// around a random level.
pub fn time_only_coefficients(rng: &mut ChaCha8Rng, bound: Matrix) -> orthant::dynamic::DynamicCoefficients {
    let n = bound.dim();
    let level: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.5)).collect();
    let amplitude: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let speed: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
    let phase: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..6.3)).collect();
    let omega: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.1..3.0)).collect();
    let pi = bound.clone();
    orthant::dynamic::DynamicCoefficients::time_only(
        RoutingMatrix::new(bound).unwrap(),
        move |t, out| {
            for i in 0..n {
                out[i] = level[i] + amplitude[i] * (speed[i] * t).sin();
            }
        },
        move |t, out| {
            for (idx, v) in out.entries_mut().iter_mut().enumerate() {
                let s = (omega[idx] * t + phase[idx]).sin();
                *v = pi.entries()[idx] * (0.5 + 0.5 * s * s);
            }
        },
    )
    .unwrap()
}

/// Random strictly upper triangular routing bound.
pub fn feedforward_bound(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut p = Matrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < 0.7 {
                p.set(i, j, rng.random_range(0.0..1.5));
            }
        }
    }
    p
}
