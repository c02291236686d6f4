//! The reflection map `X ↦ (W, L)` on the nonnegative orthant for a
//! constant routing matrix.
//!
//! `W = X + R·L` with `R = I - Pᵗ`, where `L` is nonnegative, nondecreasing
//! and increases in coordinate `i` only while `Wᵢ = 0`. For the
//! piecewise-constant inputs stored in a [`VectorPath`], the continuous-time
//! map reduces to one least-element complementarity problem per grid step,
//! so [`reflect`] is exact up to rounding. [`reflect_fixed_point`] solves the
//! same problem by a global Picard iteration and serves as an independent
//! check.

mod bounds;
mod diagnostics;
mod fixed_point;
mod lcp;
mod path;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use bounds::{regulator_bounds, RegulatorBounds};
pub use diagnostics::{difference_diagnostics, DifferenceChecks, DifferenceReport, DifferenceTracker};
pub use fixed_point::reflect_fixed_point;
pub use lcp::StepLcp;
pub use path::{shift, TimeGrid, VectorPath};

use crate::error::{check_dim, Error, Result};
use crate::mmatrix::{Matrix, RoutingMatrix};

/// Default solver tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Largest per-step change of frozen coefficients, reported by the dynamic
/// solver.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFreezing {
    pub max_drift_change: f64,
    pub max_routing_change: f64,
}

/// Regulated path `W` and regulator `L` on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectionSolution {
    pub w: VectorPath,
    pub l: VectorPath,
    /// Largest violation of the defining equation over the grid, including
    /// any clamping of `W` to zero.
    pub residual: f64,
    pub freezing: Option<CoefficientFreezing>,
}

impl ReflectionSolution {
    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.w.grid()
    }

    /// Solution CSV: `t,w1..wn,l1..ln`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        path::write_columns(out, self.w.grid(), &[("w", &self.w), ("l", &self.l)])
    }

    /// Reads a solution CSV. The residual is not stored in the file and is
    /// set to NaN.
    pub fn read_csv<R: Read>(input: R) -> Result<ReflectionSolution> {
        let (grid, columns) = path::read_columns(input)?;
        if columns.is_empty() || columns.len() % 2 != 0 {
            return Err(Error::input(
                "solution CSV needs an even, nonzero number of value columns (w then l)",
            ));
        }
        let dim = columns.len() / 2;
        let len = grid.len();
        let mut w = vec![0.0; len * dim];
        let mut l = vec![0.0; len * dim];
        for i in 0..dim {
            for k in 0..len {
                w[k * dim + i] = columns[i][k];
                l[k * dim + i] = columns[dim + i][k];
            }
        }
        Ok(ReflectionSolution {
            w: VectorPath::new(grid.clone(), dim, w)?,
            l: VectorPath::new(grid, dim, l)?,
            residual: f64::NAN,
            freezing: None,
        })
    }
}

/// Shared per-step state: `W = X_eff + C`, where `C` accumulates `R·ΔL` and
/// `X_eff` is the input plus any drift integral.
#[derive(Clone, Debug)]
pub(crate) struct StepState {
    lcp: StepLcp,
    started: bool,
    push: Vec<f64>,
    l: Vec<f64>,
    dl: Vec<f64>,
    q: Vec<f64>,
    w_raw: Vec<f64>,
    w: Vec<f64>,
    clamp: f64,
}

impl StepState {
    pub(crate) fn new(dim: usize, rho: f64, tol: f64) -> StepState {
        StepState {
            lcp: StepLcp::new(dim, rho, tol),
            started: false,
            push: vec![0.0; dim],
            l: vec![0.0; dim],
            dl: vec![0.0; dim],
            q: vec![0.0; dim],
            w_raw: vec![0.0; dim],
            w: vec![0.0; dim],
            clamp: 0.0,
        }
    }

    /// One grid step with reflection matrix `I - Pᵗ`.
    pub(crate) fn advance(&mut self, p: &Matrix, p_is_zero: bool, x_eff: &[f64]) -> Result<()> {
        let n = self.l.len();
        for i in 0..n {
            self.q[i] = x_eff[i] + self.push[i];
        }
        self.lcp.solve(p, p_is_zero, &self.q, &mut self.dl)?;
        let tol = self.lcp.tol();
        self.clamp = 0.0;
        for i in 0..n {
            let mut r = self.dl[i];
            if !p_is_zero {
                for j in 0..n {
                    r -= p.get(j, i) * self.dl[j];
                }
            }
            self.push[i] += r;
            self.l[i] += self.dl[i];
            let w = x_eff[i] + self.push[i];
            self.w_raw[i] = w;
            self.w[i] = if w < 0.0 && w >= -tol {
                self.clamp = self.clamp.max(-w);
                0.0
            } else {
                w
            };
        }
        self.started = true;
        Ok(())
    }

    pub(crate) fn w(&self) -> &[f64] {
        &self.w
    }

    pub(crate) fn l(&self) -> &[f64] {
        &self.l
    }

    pub(crate) fn dl(&self) -> &[f64] {
        &self.dl
    }

    pub(crate) fn clamp(&self) -> f64 {
        self.clamp
    }

    pub(crate) fn tol(&self) -> f64 {
        self.lcp.tol()
    }
}

/// Streaming reflection for a constant routing matrix: feed the input one
/// grid point at a time and read `W` and `L` after each step.
#[derive(Clone, Debug)]
pub struct Reflector<'a> {
    routing: &'a RoutingMatrix,
    zero: bool,
    state: StepState,
    rl: Vec<f64>,
    residual: f64,
}

impl<'a> Reflector<'a> {
    pub fn new(routing: &'a RoutingMatrix, tol: f64) -> Result<Reflector<'a>> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::input(format!("tolerance must be positive, got {tol}")));
        }
        let n = routing.dim();
        Ok(Reflector {
            routing,
            zero: routing.is_zero(),
            state: StepState::new(n, routing.spectral_radius(), tol),
            rl: vec![0.0; n],
            residual: 0.0,
        })
    }

    /// Consumes `X(t_k)`; the first call is the reflection at time zero.
    pub fn step(&mut self, x: &[f64]) -> Result<()> {
        check_dim(self.routing.dim(), x.len())?;
        self.state.advance(self.routing.p(), self.zero, x)?;
        self.routing.apply_reflection_into(self.state.l(), &mut self.rl);
        for i in 0..x.len() {
            let r = (self.state.w()[i] - x[i] - self.rl[i]).abs();
            self.residual = self.residual.max(r);
        }
        Ok(())
    }

    pub fn w(&self) -> &[f64] {
        self.state.w()
    }

    pub fn l(&self) -> &[f64] {
        self.state.l()
    }

    /// Regulator increment of the last step.
    pub fn dl(&self) -> &[f64] {
        self.state.dl()
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }
}

/// Reflection of a discretized path by per-step least-element
/// complementarity.
pub fn reflect(x: &VectorPath, routing: &RoutingMatrix, tol: f64) -> Result<ReflectionSolution> {
    check_dim(routing.dim(), x.dim())?;
    let mut reflector = Reflector::new(routing, tol)?;
    let n = x.dim();
    let mut w = Vec::with_capacity(x.values().len());
    let mut l = Vec::with_capacity(x.values().len());
    for point in x.points() {
        reflector.step(point)?;
        w.extend_from_slice(reflector.w());
        l.extend_from_slice(reflector.l());
    }
    Ok(ReflectionSolution {
        w: VectorPath::new(x.grid().clone(), n, w)?,
        l: VectorPath::new(x.grid().clone(), n, l)?,
        residual: reflector.residual(),
        freezing: None,
    })
}
