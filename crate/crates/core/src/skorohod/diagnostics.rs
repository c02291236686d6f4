use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mmatrix::{Matrix, RoutingMatrix};

use super::{shift, Reflector, VectorPath};

/// Finite-horizon audit of `D = W(a+X) - W(X)` and of the two regulators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceReport {
    pub horizon: f64,
    pub tol: f64,
    pub initial_difference: Vec<f64>,
    pub terminal_difference: Vec<f64>,
    /// `‖D(t_K)‖∞`.
    pub terminal_sup: f64,
    /// Minimum of `D` over grid and coordinates.
    pub min_difference: f64,
    /// Minimum of the transformed difference `T·D`.
    pub min_transformed: f64,
    /// Largest increase of any coordinate of `T·D` between grid points.
    pub max_transformed_increase: f64,
    /// Largest increase of `eᵗD` between grid points.
    pub max_total_increase: f64,
    /// Largest value of `L(a+X) - L(X)`.
    pub max_regulator_excess: f64,
    /// Largest increment of `L(a+X)` beyond the increment of `L(X)`.
    pub max_increment_excess: f64,
    /// Largest value of `L(X) - L(a+X) - R⁻¹a`, when that bound applies.
    pub max_regulator_gap: Option<f64>,
    pub checks: DifferenceChecks,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifferenceChecks {
    /// `D ≥ -tol` and `T·D ≥ -tol`.
    pub ordering: bool,
    /// `T·D` and `eᵗD` nonincreasing up to `tol`.
    pub monotone: bool,
    /// Regulator comparison, and the upper gap bound when it applies.
    pub regulators: bool,
}

impl DifferenceChecks {
    pub fn all(&self) -> bool {
        self.ordering && self.monotone && self.regulators
    }
}

/// Streaming version of [`difference_diagnostics`]: feed both solutions one
/// grid point at a time.
///
/// `transform` is the matrix `T` applied to `D` before the monotonicity
/// check (`R⁻¹` for a constant reflection matrix). `regulator_gap` is
/// `R⁻¹a` when the upper regulator bound should be audited.
#[derive(Clone, Debug)]
pub struct DifferenceTracker {
    transform: Matrix,
    regulator_gap: Option<Vec<f64>>,
    tol: f64,
    started: bool,
    horizon: f64,
    d: Vec<f64>,
    td: Vec<f64>,
    prev_td: Vec<f64>,
    prev_total: f64,
    prev_gap: Vec<f64>,
    initial: Vec<f64>,
    min_difference: f64,
    min_transformed: f64,
    max_transformed_increase: f64,
    max_total_increase: f64,
    max_regulator_excess: f64,
    max_increment_excess: f64,
    max_regulator_gap: f64,
}

impl DifferenceTracker {
    pub fn new(transform: Matrix, regulator_gap: Option<Vec<f64>>, tol: f64) -> Result<DifferenceTracker> {
        let n = transform.dim();
        if let Some(g) = &regulator_gap {
            check_dim(n, g.len())?;
        }
        Ok(DifferenceTracker {
            transform,
            regulator_gap,
            tol,
            started: false,
            horizon: 0.0,
            d: vec![0.0; n],
            td: vec![0.0; n],
            prev_td: vec![0.0; n],
            prev_total: 0.0,
            prev_gap: vec![0.0; n],
            initial: Vec::new(),
            min_difference: f64::INFINITY,
            min_transformed: f64::INFINITY,
            max_transformed_increase: 0.0,
            max_total_increase: 0.0,
            max_regulator_excess: f64::NEG_INFINITY,
            max_increment_excess: 0.0,
            max_regulator_gap: f64::NEG_INFINITY,
        })
    }

    /// Records grid time `t` with `(W, L)` for the shifted and the unshifted
    /// input.
    pub fn observe(&mut self, t: f64, wa: &[f64], la: &[f64], w0: &[f64], l0: &[f64]) {
        let n = self.d.len();
        for i in 0..n {
            self.d[i] = wa[i] - w0[i];
            self.min_difference = self.min_difference.min(self.d[i]);
        }
        self.transform.mul_vec_into(&self.d, &mut self.td);
        let total: f64 = self.d.iter().sum();
        for i in 0..n {
            self.min_transformed = self.min_transformed.min(self.td[i]);
            let gap = l0[i] - la[i];
            self.max_regulator_excess = self.max_regulator_excess.max(-gap);
            if let Some(g) = &self.regulator_gap {
                self.max_regulator_gap = self.max_regulator_gap.max(gap - g[i]);
            }
            if self.started {
                self.max_transformed_increase = self.max_transformed_increase.max(self.td[i] - self.prev_td[i]);
                self.max_increment_excess = self.max_increment_excess.max(self.prev_gap[i] - gap);
            }
            self.prev_gap[i] = gap;
        }
        if self.started {
            self.max_total_increase = self.max_total_increase.max(total - self.prev_total);
        } else {
            self.initial = self.d.clone();
        }
        self.prev_total = total;
        self.prev_td.copy_from_slice(&self.td);
        self.horizon = t;
        self.started = true;
    }

    /// Current `D`.
    pub fn difference(&self) -> &[f64] {
        &self.d
    }

    pub fn finish(self) -> DifferenceReport {
        let tol = self.tol;
        let max_regulator_gap = self.regulator_gap.as_ref().map(|_| self.max_regulator_gap);
        let checks = DifferenceChecks {
            ordering: self.min_difference >= -tol && self.min_transformed >= -tol,
            monotone: self.max_transformed_increase <= tol && self.max_total_increase <= tol,
            regulators: self.max_regulator_excess <= tol
                && self.max_increment_excess <= tol
                && max_regulator_gap.is_none_or(|g| g <= tol),
        };
        DifferenceReport {
            horizon: self.horizon,
            tol,
            terminal_sup: self.d.iter().fold(0.0, |m, v| m.max(v.abs())),
            terminal_difference: self.d,
            initial_difference: self.initial,
            min_difference: self.min_difference,
            min_transformed: self.min_transformed,
            max_transformed_increase: self.max_transformed_increase,
            max_total_increase: self.max_total_increase,
            max_regulator_excess: self.max_regulator_excess,
            max_increment_excess: self.max_increment_excess,
            max_regulator_gap,
            checks,
        }
    }
}

/// Reflects `X` and `a + X` side by side and audits their difference.
pub fn difference_diagnostics(
    x: &VectorPath,
    a: &[f64],
    routing: &RoutingMatrix,
    tol: f64,
) -> Result<DifferenceReport> {
    check_dim(routing.dim(), x.dim())?;
    let shifted = shift(a, x)?;
    if x.is_empty() {
        return Err(Error::input("empty path"));
    }
    let mut base = Reflector::new(routing, tol)?;
    let mut moved = Reflector::new(routing, tol)?;
    let mut tracker = DifferenceTracker::new(routing.inverse().clone(), Some(routing.apply_inverse(a)), tol)?;
    for (k, t) in x.grid().iter().enumerate() {
        base.step(x.point(k))?;
        moved.step(shifted.point(k))?;
        tracker.observe(t, moved.w(), moved.l(), base.w(), base.l());
    }
    Ok(tracker.finish())
}
