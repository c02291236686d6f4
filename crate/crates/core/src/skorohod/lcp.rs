//! Least-element linear complementarity for one reflection step.
//!
//! Given `q` (the unconstrained position after the step) and a routing
//! matrix `P` with `ρ(P) < 1`, find the componentwise-least `y ≥ 0` with
//! `q + (I - Pᵗ)·y ≥ 0` and `yᵢ·(q + (I - Pᵗ)·y)ᵢ = 0`.

use crate::error::{Error, Result};
use crate::mmatrix::Matrix;

/// Reusable buffers and stopping rule for [`StepLcp::solve`].
#[derive(Clone, Debug)]
pub struct StepLcp {
    tol: f64,
    rho: f64,
    max_iter: usize,
    next: Vec<f64>,
    active: Vec<usize>,
    rhs: Vec<f64>,
}

impl StepLcp {
    /// `rho` bounds the spectral radius of every matrix passed to `solve`.
    pub fn new(dim: usize, rho: f64, tol: f64) -> StepLcp {
        let max_iter = if rho > 0.0 {
            (tol.ln() / rho.ln()).ceil().max(0.0) as usize + 10_000
        } else {
            10_000
        };
        StepLcp {
            tol,
            rho,
            max_iter,
            next: vec![0.0; dim],
            active: Vec::with_capacity(dim),
            rhs: Vec::with_capacity(dim),
        }
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn max_iter(&self) -> usize {
        self.max_iter
    }

    /// Writes the least element into `y` and returns the number of sweeps.
    ///
    /// The sweep `y ← max(0, Pᵗy - q)` starts at zero and increases
    /// monotonically to the least solution. Once it settles, the linear
    /// system on the support of `y` is solved directly so that the step is
    /// exact up to rounding.
    pub fn solve(&mut self, p: &Matrix, p_is_zero: bool, q: &[f64], y: &mut [f64]) -> Result<usize> {
        let n = q.len();
        y.iter_mut().for_each(|v| *v = 0.0);
        if q.iter().all(|&v| v >= 0.0) {
            return Ok(0);
        }
        if p_is_zero {
            for (yi, &qi) in y.iter_mut().zip(q) {
                *yi = (-qi).max(0.0);
            }
            return Ok(1);
        }

        let stop = self.tol * (1.0 - self.rho);
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let mut change: f64 = 0.0;
            for i in 0..n {
                let mut s = -q[i];
                for j in 0..n {
                    s += p.get(j, i) * y[j];
                }
                let v = s.max(0.0);
                change = change.max((v - y[i]).abs());
                self.next[i] = v;
            }
            y.copy_from_slice(&self.next[..n]);
            if change <= stop {
                break;
            }
            if sweeps >= self.max_iter {
                return Err(Error::Convergence {
                    iterations: sweeps,
                    context: "step complementarity problem; routing matrix may be near-critical".into(),
                });
            }
        }
        self.polish(p, q, y);
        Ok(sweeps)
    }

    /// Solves `(I - Pᵗ)_AA · y_A = -q_A` on the support `A` of `y` and keeps
    /// the result when it is feasible.
    fn polish(&mut self, p: &Matrix, q: &[f64], y: &mut [f64]) {
        let n = q.len();
        self.active.clear();
        self.active.extend((0..n).filter(|&i| y[i] > 0.0));
        let m = self.active.len();
        if m == 0 {
            return;
        }
        let mut system = Matrix::zeros(m);
        self.rhs.clear();
        for (a, &i) in self.active.iter().enumerate() {
            for (b, &j) in self.active.iter().enumerate() {
                let r = if i == j { 1.0 } else { 0.0 } - p.get(j, i);
                system.set(a, b, r);
            }
            self.rhs.push(-q[i]);
        }
        let Some(x) = system.solve(&self.rhs) else { return };
        if x.iter().any(|&v| !(v >= 0.0)) {
            return;
        }
        // Inactive coordinates must stay (numerically) nonnegative.
        for i in (0..n).filter(|i| !self.active.contains(i)) {
            let mut w = q[i];
            for (a, &j) in self.active.iter().enumerate() {
                w -= p.get(j, i) * x[a];
            }
            if w < -self.tol {
                return;
            }
        }
        for (a, &i) in self.active.iter().enumerate() {
            y[i] = x[a];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_pair_both_active() {
        // R·y = (1, 1) with R = [[1, -0.5], [-0.5, 1]] gives y = (2, 2).
        let p = Matrix::from_rows(&[&[0.0, 0.5], &[0.5, 0.0]]);
        let mut lcp = StepLcp::new(2, 0.5, 1e-10);
        let mut y = [0.0; 2];
        lcp.solve(&p, false, &[-1.0, -1.0], &mut y).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-14 && (y[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn feasible_q_needs_no_push() {
        let p = Matrix::from_rows(&[&[0.0, 0.5], &[0.5, 0.0]]);
        let mut lcp = StepLcp::new(2, 0.5, 1e-10);
        let mut y = [7.0; 2];
        assert_eq!(lcp.solve(&p, false, &[0.0, 3.0], &mut y).unwrap(), 0);
        assert_eq!(y, [0.0, 0.0]);
    }

    #[test]
    fn one_sided_push_feeds_neighbour() {
        // Pushing coordinate 0 by 1 lowers coordinate 1 by 0.5, which is still
        // nonnegative, so only coordinate 0 is active.
        let p = Matrix::from_rows(&[&[0.0, 0.5], &[0.5, 0.0]]);
        let mut lcp = StepLcp::new(2, 0.5, 1e-10);
        let mut y = [0.0; 2];
        lcp.solve(&p, false, &[-1.0, 1.0], &mut y).unwrap();
        assert_eq!(y, [1.0, 0.0]);
    }

    #[test]
    fn zero_routing_is_negative_part() {
        let p = Matrix::zeros(3);
        let mut lcp = StepLcp::new(3, 0.0, 1e-10);
        let mut y = [0.0; 3];
        lcp.solve(&p, true, &[-1.5, 2.0, -0.25], &mut y).unwrap();
        assert_eq!(y, [1.5, 0.0, 0.25]);
    }

    #[test]
    fn iteration_cap_reports_convergence_error() {
        let p = Matrix::from_rows(&[&[0.0, 0.999999], &[0.999999, 0.0]]);
        let mut lcp = StepLcp::new(2, 0.999999, 1e-10);
        lcp.max_iter = 5;
        let mut y = [0.0; 2];
        let err = lcp.solve(&p, false, &[-1.0, -1.0], &mut y).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }));
    }
}
