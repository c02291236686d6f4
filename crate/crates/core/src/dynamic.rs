//! Reflection with time- and state-dependent drift `b(t, ℓ, w)` and
//! routing `P(t, ℓ, w)`:
//!
//! `W(t) = a + X(t) + ∫₀ᵗ b(s, L(s-), W(s-)) ds + ∫₀ᵗ R(s, L(s-), W(s-)) dL(s)`
//! with `R = I - Pᵗ`.
//!
//! The solver freezes the coefficients over each grid step (left endpoint
//! for the drift, pre-jump state for the routing) and solves the same
//! per-step complementarity problem as the constant solver. With constant
//! coefficients it reproduces [`crate::skorohod::reflect`] bit for bit.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{ConditionVerdict, CouplingResult, CouplingTracker, Verdict};
use crate::error::{check_dim, Error, Result};
use crate::mmatrix::{Matrix, RoutingMatrix};
use crate::processes::{sampler, ProcessSpec};
use crate::skorohod::{
    CoefficientFreezing, DifferenceReport, DifferenceTracker, ReflectionSolution, StepState, TimeGrid, VectorPath,
};

/// `b(t, ℓ, w)` written into the output slice.
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `P(t, ℓ, w)` written into the output matrix.
pub type RoutingFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut Matrix) + Send + Sync>;

/// Drift and routing functions with their declared structure.
///
/// `bound` is the entrywise supremum `Π` of the routing function; every
/// evaluation is checked against it.
#[derive(Clone)]
pub struct DynamicCoefficients {
    dim: usize,
    drift: DriftFn,
    routing: RoutingFn,
    bound: RoutingMatrix,
    lipschitz: f64,
    constant: bool,
    time_only: bool,
    l_independent: bool,
    feedforward: bool,
}

impl std::fmt::Debug for DynamicCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynamicCoefficients")
            .field("dim", &self.dim)
            .field("bound", &self.bound)
            .field("lipschitz", &self.lipschitz)
            .field("constant", &self.constant)
            .field("time_only", &self.time_only)
            .field("l_independent", &self.l_independent)
            .field("feedforward", &self.feedforward)
            .finish()
    }
}

impl DynamicCoefficients {
    /// General coefficients. Structural flags default to `false`; set them
    /// with the builder methods.
    pub fn new(bound: RoutingMatrix, lipschitz: f64, drift: DriftFn, routing: RoutingFn) -> Result<Self> {
        if !bound.has_zero_diagonal() {
            return Err(Error::InvalidRouting("routing bound must have zero diagonal".into()));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::input("Lipschitz constant must be finite and nonnegative"));
        }
        Ok(DynamicCoefficients {
            dim: bound.dim(),
            drift,
            routing,
            bound,
            lipschitz,
            constant: false,
            time_only: false,
            l_independent: false,
            feedforward: false,
        })
    }

    /// Constant drift `b` and routing `P`, with `Π = P`.
    pub fn constant(b: Vec<f64>, p: RoutingMatrix) -> Result<Self> {
        check_dim(p.dim(), b.len())?;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("drift must be finite"));
        }
        let feedforward = p.is_feedforward();
        let entries = p.p().clone();
        let drift: DriftFn = Arc::new(move |_, _, _, out| out.copy_from_slice(&b));
        let routing: RoutingFn = Arc::new(move |_, _, _, out| out.entries_mut().copy_from_slice(entries.entries()));
        let mut c = DynamicCoefficients::new(p, 0.0, drift, routing)?;
        c.constant = true;
        c.time_only = true;
        c.l_independent = true;
        c.feedforward = feedforward;
        Ok(c)
    }

    /// Coefficients depending on time only.
    pub fn time_only(
        bound: RoutingMatrix,
        drift: impl Fn(f64, &mut [f64]) + Send + Sync + 'static,
        routing: impl Fn(f64, &mut Matrix) + Send + Sync + 'static,
    ) -> Result<Self> {
        let drift: DriftFn = Arc::new(move |t, _, _, out| drift(t, out));
        let routing: RoutingFn = Arc::new(move |t, _, _, out| routing(t, out));
        let mut c = DynamicCoefficients::new(bound, 0.0, drift, routing)?;
        c.time_only = true;
        c.l_independent = true;
        Ok(c)
    }

    pub fn with_time_only(mut self, flag: bool) -> Self {
        self.time_only = flag;
        self
    }

    pub fn with_l_independent(mut self, flag: bool) -> Self {
        self.l_independent = flag;
        self
    }

    pub fn with_feedforward(mut self, flag: bool) -> Self {
        self.feedforward = flag;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound(&self) -> &RoutingMatrix {
        &self.bound
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn is_time_only(&self) -> bool {
        self.time_only
    }

    pub fn is_l_independent(&self) -> bool {
        self.l_independent
    }

    pub fn is_feedforward(&self) -> bool {
        self.feedforward
    }

    pub fn drift_at(&self, t: f64, l: &[f64], w: &[f64], out: &mut [f64]) {
        (self.drift)(t, l, w, out)
    }

    pub fn routing_at(&self, t: f64, l: &[f64], w: &[f64], out: &mut Matrix) {
        (self.routing)(t, l, w, out)
    }

    /// Checks an evaluated routing matrix against `Π`.
    fn check_routing(&self, p: &Matrix, t: f64, tol: f64) -> Result<()> {
        let pi = self.bound.p();
        for i in 0..self.dim {
            for j in 0..self.dim {
                let v = p.get(i, j);
                let ok = v.is_finite() && v >= 0.0 && if i == j { v == 0.0 } else { v <= pi.get(i, j) + tol };
                if !ok {
                    return Err(Error::model(format!(
                        "routing entry ({i}, {j}) = {v} at t = {t} violates the bound {}",
                        pi.get(i, j)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Streaming dynamic reflection of `a + X`.
#[derive(Clone, Debug)]
pub struct DynamicReflector<'a> {
    coeffs: &'a DynamicCoefficients,
    a: Vec<f64>,
    state: StepState,
    p: Matrix,
    p_prev: Matrix,
    b: Vec<f64>,
    b_prev: Vec<f64>,
    drift_integral: Vec<f64>,
    x_eff: Vec<f64>,
    zero_l: Vec<f64>,
    t_prev: f64,
    steps: usize,
    freezing: CoefficientFreezing,
    residual: f64,
    tol: f64,
}

impl<'a> DynamicReflector<'a> {
    pub fn new(coeffs: &'a DynamicCoefficients, a: &[f64], tol: f64) -> Result<Self> {
        let n = coeffs.dim();
        check_dim(n, a.len())?;
        if a.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::input("initial vector must be finite and nonnegative"));
        }
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::input(format!("tolerance must be positive, got {tol}")));
        }
        Ok(DynamicReflector {
            coeffs,
            a: a.to_vec(),
            state: StepState::new(n, coeffs.bound.spectral_radius(), tol),
            p: Matrix::zeros(n),
            p_prev: Matrix::zeros(n),
            b: vec![0.0; n],
            b_prev: vec![0.0; n],
            drift_integral: vec![0.0; n],
            x_eff: vec![0.0; n],
            zero_l: vec![0.0; n],
            t_prev: 0.0,
            steps: 0,
            freezing: CoefficientFreezing::default(),
            residual: 0.0,
            tol,
        })
    }

    /// Consumes `X(t)` at the next grid time.
    pub fn step(&mut self, t: f64, x: &[f64]) -> Result<()> {
        let n = self.a.len();
        check_dim(n, x.len())?;
        let c = self.coeffs;
        if self.steps == 0 {
            c.routing_at(t, &self.zero_l, &self.zero_l, &mut self.p);
        } else {
            if !(t >= self.t_prev) {
                return Err(Error::input("grid times must increase"));
            }
            std::mem::swap(&mut self.b, &mut self.b_prev);
            c.drift_at(self.t_prev, self.state.l(), self.state.w(), &mut self.b);
            let dt = t - self.t_prev;
            for i in 0..n {
                self.drift_integral[i] += self.b[i] * dt;
            }
            std::mem::swap(&mut self.p, &mut self.p_prev);
            c.routing_at(t, self.state.l(), self.state.w(), &mut self.p);
            if self.steps >= 2 {
                let db = self
                    .b
                    .iter()
                    .zip(&self.b_prev)
                    .fold(0.0_f64, |m, (u, v)| m.max((u - v).abs()));
                self.freezing.max_drift_change = self.freezing.max_drift_change.max(db);
            }
            let dp = self.p.sub(&self.p_prev).max_abs();
            self.freezing.max_routing_change = self.freezing.max_routing_change.max(dp);
        }
        c.check_routing(&self.p, t, self.tol)?;
        for i in 0..n {
            self.x_eff[i] = (x[i] + self.a[i]) + self.drift_integral[i];
        }
        let zero = self.p.is_zero();
        self.state.advance(&self.p, zero, &self.x_eff)?;
        self.residual = self.residual.max(self.state.clamp());
        self.t_prev = t;
        self.steps += 1;
        Ok(())
    }

    pub fn w(&self) -> &[f64] {
        self.state.w()
    }

    pub fn l(&self) -> &[f64] {
        self.state.l()
    }

    /// `∫ b ds` up to the current grid time.
    pub fn drift_integral(&self) -> &[f64] {
        &self.drift_integral
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn freezing(&self) -> CoefficientFreezing {
        self.freezing
    }

    pub fn tol(&self) -> f64 {
        self.state.tol()
    }
}

/// Dynamic reflection of `a + X`.
pub fn reflect_dynamic(
    x: &VectorPath,
    coeffs: &DynamicCoefficients,
    a: &[f64],
    tol: f64,
) -> Result<ReflectionSolution> {
    check_dim(coeffs.dim(), x.dim())?;
    let mut r = DynamicReflector::new(coeffs, a, tol)?;
    let mut w = Vec::with_capacity(x.values().len());
    let mut l = Vec::with_capacity(x.values().len());
    for (k, t) in x.grid().iter().enumerate() {
        r.step(t, x.point(k))?;
        w.extend_from_slice(r.w());
        l.extend_from_slice(r.l());
    }
    Ok(ReflectionSolution {
        w: VectorPath::new(x.grid().clone(), x.dim(), w)?,
        l: VectorPath::new(x.grid().clone(), x.dim(), l)?,
        residual: r.residual(),
        freezing: Some(r.freezing()),
    })
}

/// Audits `W^a - W^0` for dynamic coefficients.
///
/// The monotonicity check uses the transform `(I - Πᵗ)⁻¹` and is meaningful
/// for time-only coefficients. The upper regulator gap `R⁻¹a` is audited
/// only for constant coefficients.
pub fn dynamic_difference(
    x: &VectorPath,
    coeffs: &DynamicCoefficients,
    a: &[f64],
    tol: f64,
) -> Result<DifferenceReport> {
    check_dim(coeffs.dim(), x.dim())?;
    let zero = vec![0.0; x.dim()];
    let mut base = DynamicReflector::new(coeffs, &zero, tol)?;
    let mut moved = DynamicReflector::new(coeffs, a, tol)?;
    let gap = coeffs.is_constant().then(|| coeffs.bound.apply_inverse(a));
    let mut tracker = DifferenceTracker::new(coeffs.bound.inverse().clone(), gap, tol)?;
    for (k, t) in x.grid().iter().enumerate() {
        base.step(t, x.point(k))?;
        moved.step(t, x.point(k))?;
        tracker.observe(t, moved.w(), moved.l(), base.w(), base.l());
    }
    Ok(tracker.finish())
}

/// Per-coordinate drift envelope `β(s)`, an upper bound for
/// `sup_w b(s, 0, w)`.
#[derive(Clone)]
pub struct Envelope {
    dim: usize,
    beta: Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>,
}

impl std::fmt::Debug for Envelope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Envelope")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl Envelope {
    pub fn new(dim: usize, beta: impl Fn(f64, &mut [f64]) + Send + Sync + 'static) -> Envelope {
        Envelope {
            dim,
            beta: Arc::new(beta),
        }
    }

    pub fn constant(values: Vec<f64>) -> Envelope {
        Envelope::new(values.len(), move |_, out| out.copy_from_slice(&values))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, s: f64, out: &mut [f64]) {
        (self.beta)(s, out)
    }

    /// Left-endpoint integrals `Σ_{j<k} β(t_j)·Δt_j` on `grid`.
    pub fn integrate(&self, grid: &TimeGrid) -> VectorPath {
        let n = self.dim;
        let mut acc = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut values = Vec::with_capacity(grid.len() * n);
        let mut prev: Option<f64> = None;
        for t in grid.iter() {
            if let Some(s) = prev {
                self.eval(s, &mut beta);
                for i in 0..n {
                    acc[i] += beta[i] * (t - s);
                }
            }
            values.extend_from_slice(&acc);
            prev = Some(t);
        }
        VectorPath::new(grid.clone(), n, values).expect("finite envelope integrals")
    }

    /// Largest gap between left- and right-endpoint sums over the grid, a
    /// quadrature error bound for monotone envelopes.
    pub fn quadrature_error(&self, grid: &TimeGrid) -> f64 {
        let n = self.dim;
        let (mut left, mut right) = (vec![0.0; n], vec![0.0; n]);
        let (mut bl, mut br) = (vec![0.0; n], vec![0.0; n]);
        let mut err: f64 = 0.0;
        let times = grid.to_vec();
        for pair in times.windows(2) {
            self.eval(pair[0], &mut bl);
            self.eval(pair[1], &mut br);
            let dt = pair[1] - pair[0];
            for i in 0..n {
                left[i] += bl[i] * dt;
                right[i] += br[i] * dt;
                err = err.max((left[i] - right[i]).abs());
            }
        }
        err
    }

    /// Samples `β(s) ≥ b(s, 0, w)` at random `(s, w)`; returns the first
    /// counterexample.
    pub fn check_against(&self, coeffs: &DynamicCoefficients, samples: usize, seed: u64) -> Option<Counterexample> {
        let n = coeffs.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zero = vec![0.0; n];
        let (mut beta, mut b) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..samples {
            let t = rng.random_range(0.0..SAMPLE_TIME);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..SAMPLE_LEVEL)).collect();
            self.eval(t, &mut beta);
            coeffs.drift_at(t, &zero, &w, &mut b);
            if let Some(i) = (0..n).find(|&i| b[i] > beta[i] + 1e-12) {
                return Some(Counterexample {
                    check: "envelope".into(),
                    detail: format!("b_{i}(t, 0, w) = {} exceeds envelope {}", b[i], beta[i]),
                    t,
                    l: zero.clone(),
                    w,
                    l_alt: None,
                    w_alt: None,
                });
            }
        }
        None
    }
}

/// Proxy for `lim inf [X_i(t) + ∫β_i] = -∞`: satisfied when the running
/// minimum of `X_i + Σβ_iΔt` reaches `-threshold`.
pub fn envelope_divergence(x: &VectorPath, env: &Envelope, threshold: f64) -> Result<Vec<ConditionVerdict>> {
    check_dim(env.dim(), x.dim())?;
    let integral = env.integrate(x.grid());
    Ok(running_min_verdicts(x, &integral, threshold))
}

/// Transformed variant for constant `R`: `(R⁻¹X)_i + ∫β̂_i`, where `β̂`
/// bounds `sup_w (R⁻¹b)_i(s, 0, w)`.
pub fn envelope_divergence_transformed(
    x: &VectorPath,
    routing: &RoutingMatrix,
    env_hat: &Envelope,
    threshold: f64,
) -> Result<Vec<ConditionVerdict>> {
    check_dim(routing.dim(), x.dim())?;
    check_dim(env_hat.dim(), x.dim())?;
    let inverse = routing.inverse();
    let rx = x.map_points(x.dim(), |p, out| inverse.mul_vec_into(p, out));
    let integral = env_hat.integrate(x.grid());
    Ok(running_min_verdicts(&rx, &integral, threshold))
}

fn running_min_verdicts(x: &VectorPath, integral: &VectorPath, threshold: f64) -> Vec<ConditionVerdict> {
    let n = x.dim();
    let mut min = vec![f64::INFINITY; n];
    for k in 0..x.len() {
        for i in 0..n {
            min[i] = min[i].min(x.point(k)[i] + integral.point(k)[i]);
        }
    }
    let horizon = x.grid().horizon();
    min.into_iter()
        .enumerate()
        .map(|(i, m)| ConditionVerdict {
            coordinate: i,
            verdict: if m <= -threshold {
                Verdict::Satisfied
            } else {
                Verdict::Inconclusive
            },
            witness: m,
            horizon,
        })
        .collect()
}

/// Audit of the regulator lower bound `L^a_i ≥ -a_i - X_i - ∫β_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundAudit {
    /// Largest value of `-a_i - X_i - Σβ_iΔt - L^a_i` over the grid.
    pub max_violation: f64,
    pub quadrature_error: f64,
    pub holds: bool,
}

pub fn lower_bound_audit(
    x: &VectorPath,
    coeffs: &DynamicCoefficients,
    env: &Envelope,
    a: &[f64],
    tol: f64,
) -> Result<LowerBoundAudit> {
    check_dim(coeffs.dim(), env.dim())?;
    let sol = reflect_dynamic(x, coeffs, a, tol)?;
    let integral = env.integrate(x.grid());
    let quadrature_error = env.quadrature_error(x.grid());
    let mut max_violation = f64::NEG_INFINITY;
    for k in 0..x.len() {
        for i in 0..x.dim() {
            let bound = -a[i] - x.point(k)[i] - integral.point(k)[i];
            max_violation = max_violation.max(bound - sol.l.point(k)[i]);
        }
    }
    Ok(LowerBoundAudit {
        max_violation,
        quadrature_error,
        holds: max_violation <= quadrature_error + tol,
    })
}

/// Range of sampled times in [`validate_assumptions`].
const SAMPLE_TIME: f64 = 100.0;
/// Range of sampled regulator and state levels in [`validate_assumptions`].
const SAMPLE_LEVEL: f64 = 10.0;
const CHECK_TOL: f64 = 1e-12;

/// A sampled point at which a declared assumption fails.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub check: String,
    pub detail: String,
    pub t: f64,
    pub l: Vec<f64>,
    pub w: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_alt: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_alt: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub samples: usize,
    pub bound: Option<Counterexample>,
    pub monotonicity: Option<Counterexample>,
    pub feedforward: Option<Counterexample>,
    pub structure: Option<Counterexample>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.bound.is_none() && self.monotonicity.is_none() && self.feedforward.is_none() && self.structure.is_none()
    }
}

struct Probe<'a> {
    coeffs: &'a DynamicCoefficients,
    b: Vec<f64>,
    b_alt: Vec<f64>,
    p: Matrix,
    p_alt: Matrix,
}

impl Probe<'_> {
    fn eval(&mut self, t: f64, l: &[f64], w: &[f64], l2: &[f64], w2: &[f64]) {
        self.coeffs.drift_at(t, l, w, &mut self.b);
        self.coeffs.routing_at(t, l, w, &mut self.p);
        self.coeffs.drift_at(t, l2, w2, &mut self.b_alt);
        self.coeffs.routing_at(t, l2, w2, &mut self.p_alt);
    }
}

fn counterexample(check: &str, detail: String, t: f64, l: &[f64], w: &[f64], l2: &[f64], w2: &[f64]) -> Counterexample {
    Counterexample {
        check: check.into(),
        detail,
        t,
        l: l.to_vec(),
        w: w.to_vec(),
        l_alt: Some(l2.to_vec()),
        w_alt: Some(w2.to_vec()),
    }
}

/// Monte-Carlo check of the declared assumptions: routing within `Π`,
/// monotonicity (drift nonincreasing in `ℓ` and nondecreasing in `w`, and
/// `R` likewise, entrywise), the feedforward pattern when declared, and the
/// declared independence of `ℓ` or of the state.
///
/// Times are drawn from `[0, 100)` and levels from `[0, 10)`.
pub fn validate_assumptions(coeffs: &DynamicCoefficients, sample_budget: usize, seed: u64) -> AssumptionReport {
    let n = coeffs.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = Probe {
        coeffs,
        b: vec![0.0; n],
        b_alt: vec![0.0; n],
        p: Matrix::zeros(n),
        p_alt: Matrix::zeros(n),
    };
    let mut report = AssumptionReport {
        samples: sample_budget,
        bound: None,
        monotonicity: None,
        feedforward: None,
        structure: None,
    };
    let pi = coeffs.bound().p();
    let level = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.random_range(0.0..SAMPLE_LEVEL)).collect() };
    for _ in 0..sample_budget {
        let t = rng.random_range(0.0..SAMPLE_TIME);
        let l = level(&mut rng);
        let w = level(&mut rng);
        let l_up: Vec<f64> = l
            .iter()
            .map(|v| v + rng.random_range(0.0..SAMPLE_LEVEL / 2.0))
            .collect();
        let w_up: Vec<f64> = w
            .iter()
            .map(|v| v + rng.random_range(0.0..SAMPLE_LEVEL / 2.0))
            .collect();

        // Bound and sign pattern at (t, l, w).
        probe.eval(t, &l, &w, &l_up, &w);
        if report.bound.is_none() {
            'outer: for i in 0..n {
                for j in 0..n {
                    let v = probe.p.get(i, j);
                    let bad = !(v >= 0.0) || (i == j && v != 0.0) || v > pi.get(i, j) + CHECK_TOL;
                    if bad {
                        report.bound = Some(Counterexample {
                            check: "routing bound".into(),
                            detail: format!("P[{i}][{j}] = {v}, bound {}", pi.get(i, j)),
                            t,
                            l: l.clone(),
                            w: w.clone(),
                            l_alt: None,
                            w_alt: None,
                        });
                        break 'outer;
                    }
                }
            }
        }
        if report.feedforward.is_none() && coeffs.is_feedforward() {
            'ff: for i in 0..n {
                for j in 0..=i {
                    if probe.p.get(i, j) != 0.0 {
                        report.feedforward = Some(Counterexample {
                            check: "feedforward pattern".into(),
                            detail: format!("P[{i}][{j}] = {} must vanish for j <= i", probe.p.get(i, j)),
                            t,
                            l: l.clone(),
                            w: w.clone(),
                            l_alt: None,
                            w_alt: None,
                        });
                        break 'ff;
                    }
                }
            }
        }

        // Monotonicity in ℓ: b nonincreasing, P nondecreasing.
        if report.monotonicity.is_none() {
            if let Some(detail) = monotone_violation(&probe, -1.0) {
                report.monotonicity = Some(counterexample("monotonicity in l", detail, t, &l, &w, &l_up, &w));
            }
        }
        if report.structure.is_none() && coeffs.is_l_independent() {
            if let Some(detail) = change(&probe) {
                report.structure = Some(counterexample("independence of l", detail, t, &l, &w, &l_up, &w));
            }
        }

        // Monotonicity in w: b nondecreasing, P nonincreasing.
        probe.eval(t, &l, &w, &l, &w_up);
        if report.monotonicity.is_none() {
            if let Some(detail) = monotone_violation(&probe, 1.0) {
                report.monotonicity = Some(counterexample("monotonicity in w", detail, t, &l, &w, &l, &w_up));
            }
        }
        if report.structure.is_none() && coeffs.is_time_only() {
            probe.eval(t, &l, &w, &l_up, &w_up);
            if let Some(detail) = change(&probe) {
                report.structure = Some(counterexample("time-only", detail, t, &l, &w, &l_up, &w_up));
            }
        }

        // Feedforward dependence: b_i and column i of P see only the first
        // i coordinates.
        if report.feedforward.is_none() && coeffs.is_feedforward() {
            for k in 0..n.saturating_sub(1) {
                let mut l2 = l.clone();
                let mut w2 = w.clone();
                l2[k + 1..].copy_from_slice(&l_up[k + 1..]);
                w2[k + 1..].copy_from_slice(&w_up[k + 1..]);
                probe.eval(t, &l, &w, &l2, &w2);
                let moved_b = (0..=k).find(|&i| probe.b[i] != probe.b_alt[i]);
                let moved_p = (0..=k).find_map(|i| {
                    (0..n)
                        .find(|&j| probe.p.get(j, i) != probe.p_alt.get(j, i))
                        .map(|j| (j, i))
                });
                let detail = match (moved_b, moved_p) {
                    (Some(i), _) => Some(format!("b_{i} depends on coordinates beyond {i}")),
                    (None, Some((j, i))) => Some(format!("P[{j}][{i}] depends on coordinates beyond {i}")),
                    _ => None,
                };
                if let Some(detail) = detail {
                    report.feedforward = Some(counterexample("feedforward dependence", detail, t, &l, &w, &l2, &w2));
                    break;
                }
            }
        }
    }
    report
}

/// `direction = -1`: moving to the alternative point must not raise `b` or
/// lower `P`; `direction = 1`: must not lower `b` or raise `P`.
fn monotone_violation(probe: &Probe<'_>, direction: f64) -> Option<String> {
    let n = probe.b.len();
    for i in 0..n {
        let db = (probe.b_alt[i] - probe.b[i]) * direction;
        if db < -CHECK_TOL {
            return Some(format!(
                "b_{i} moves the wrong way: {} -> {}",
                probe.b[i], probe.b_alt[i]
            ));
        }
        for j in 0..n {
            let dp = (probe.p_alt.get(i, j) - probe.p.get(i, j)) * direction;
            if dp > CHECK_TOL {
                return Some(format!(
                    "P[{i}][{j}] moves the wrong way: {} -> {}",
                    probe.p.get(i, j),
                    probe.p_alt.get(i, j)
                ));
            }
        }
    }
    None
}

fn change(probe: &Probe<'_>) -> Option<String> {
    if let Some(i) = (0..probe.b.len()).find(|&i| probe.b[i] != probe.b_alt[i]) {
        return Some(format!("b_{i} changes: {} -> {}", probe.b[i], probe.b_alt[i]));
    }
    if probe.p.entries() != probe.p_alt.entries() {
        return Some("routing changes".into());
    }
    None
}

/// Restriction of a feedforward problem to its first `k` coordinates.
pub fn feedforward_subproblem(
    x: &VectorPath,
    coeffs: &DynamicCoefficients,
    k: usize,
) -> Result<(VectorPath, DynamicCoefficients)> {
    check_dim(coeffs.dim(), x.dim())?;
    if !coeffs.is_feedforward() {
        return Err(Error::model("coefficients are not declared feedforward"));
    }
    let n = coeffs.dim();
    if k == 0 || k > n {
        return Err(Error::input(format!("subproblem size must be in 1..={n}, got {k}")));
    }
    let xk = x.leading_coordinates(k)?;
    let bound = coeffs.bound.leading_block(k)?;
    let pad = move |v: &[f64]| {
        let mut full = vec![0.0; n];
        full[..v.len()].copy_from_slice(v);
        full
    };
    let full = coeffs.clone();
    let drift: DriftFn = Arc::new(move |t, l, w, out| {
        let mut b = vec![0.0; n];
        full.drift_at(t, &pad(l), &pad(w), &mut b);
        out.copy_from_slice(&b[..out.len()]);
    });
    let full = coeffs.clone();
    let routing: RoutingFn = Arc::new(move |t, l, w, out| {
        let mut p = Matrix::zeros(n);
        full.routing_at(t, &pad(l), &pad(w), &mut p);
        *out = p.leading_block(out.dim());
    });
    let mut sub = DynamicCoefficients::new(bound, coeffs.lipschitz, drift, routing)?;
    sub.constant = coeffs.constant;
    sub.time_only = coeffs.time_only;
    sub.l_independent = coeffs.l_independent;
    sub.feedforward = true;
    Ok((xk, sub))
}

/// Per-seed coupling of `W^a` and `W^0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingExperiment {
    pub seeds: Vec<u64>,
    pub results: Vec<CouplingResult>,
    pub coupled_fraction: f64,
    /// Coupling times of the coupled seeds, sorted.
    pub coupling_times: Vec<f64>,
}

impl CouplingExperiment {
    pub fn from_results(seeds: Vec<u64>, results: Vec<CouplingResult>) -> CouplingExperiment {
        let mut coupling_times: Vec<f64> = results.iter().filter_map(|r| r.time).collect();
        coupling_times.sort_by(f64::total_cmp);
        let coupled_fraction = coupling_times.len() as f64 / results.len().max(1) as f64;
        CouplingExperiment {
            seeds,
            results,
            coupled_fraction,
            coupling_times,
        }
    }
}

/// Streams one seed: generates `X` on `grid` and tracks coupling of the
/// dynamic solutions from `a` and from 0.
pub fn coupling_run(
    spec: &ProcessSpec,
    coeffs: &DynamicCoefficients,
    a: &[f64],
    grid: &TimeGrid,
    seed: u64,
    tol: f64,
    coupling_tol: f64,
) -> Result<CouplingResult> {
    let mut source = sampler(spec, seed)?;
    check_dim(coeffs.dim(), source.dim())?;
    let zero = vec![0.0; a.len()];
    let mut moved = DynamicReflector::new(coeffs, a, tol)?;
    let mut base = DynamicReflector::new(coeffs, &zero, tol)?;
    let mut tracker = CouplingTracker::new(coupling_tol);
    let mut x = vec![0.0; a.len()];
    for t in grid.iter() {
        source.sample_at(t, &mut x)?;
        moved.step(t, &x)?;
        base.step(t, &x)?;
        tracker.observe(t, moved.w(), base.w());
    }
    Ok(tracker.finish())
}

/// Coupling over many seeds, run concurrently and merged in seed order.
/// The coefficients must be declared feedforward and independent of `ℓ`,
/// and pass a sampled assumption check.
pub fn coupling_experiment(
    spec: &ProcessSpec,
    coeffs: &DynamicCoefficients,
    a: &[f64],
    grid: &TimeGrid,
    seeds: &[u64],
    tol: f64,
    coupling_tol: f64,
) -> Result<CouplingExperiment> {
    if !(coeffs.is_feedforward() && coeffs.is_l_independent()) {
        return Err(Error::model(
            "coupling needs feedforward coefficients independent of the regulator",
        ));
    }
    let report = validate_assumptions(coeffs, 256, 0);
    if !report.passed() {
        return Err(Error::model(format!("coefficient assumptions fail: {report:?}")));
    }
    let results = seeds
        .par_iter()
        .map(|&seed| coupling_run(spec, coeffs, a, grid, seed, tol, coupling_tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(CouplingExperiment::from_results(seeds.to_vec(), results))
}

/// Named coefficient families for configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "catalog", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientCatalog {
    /// Constant drift and routing.
    Constant { drift: Vec<f64>, matrix: Matrix },
    /// Drift moving linearly from `start` to `end` over `[0, ramp_time]`,
    /// constant routing.
    TimeRamp {
        start: Vec<f64>,
        end: Vec<f64>,
        ramp_time: f64,
        matrix: Matrix,
    },
    /// `b_i = drift_i - damping·ℓ_i/(1 + ℓ_i)`, constant routing.
    StateDamped {
        drift: Vec<f64>,
        damping: f64,
        matrix: Matrix,
    },
    /// Constant coefficients whose routing must be strictly upper
    /// triangular.
    FeedforwardConstant { drift: Vec<f64>, matrix: Matrix },
}

impl CoefficientCatalog {
    pub fn build(&self) -> Result<DynamicCoefficients> {
        match self {
            CoefficientCatalog::Constant { drift, matrix } => {
                DynamicCoefficients::constant(drift.clone(), RoutingMatrix::new(matrix.clone())?)
            }
            CoefficientCatalog::FeedforwardConstant { drift, matrix } => {
                let p = RoutingMatrix::new(matrix.clone())?;
                if !p.is_feedforward() {
                    return Err(Error::InvalidRouting(
                        "feedforward routing must vanish on and below the diagonal".into(),
                    ));
                }
                DynamicCoefficients::constant(drift.clone(), p)
            }
            CoefficientCatalog::TimeRamp {
                start,
                end,
                ramp_time,
                matrix,
            } => {
                let p = RoutingMatrix::new(matrix.clone())?;
                check_dim(p.dim(), start.len())?;
                check_dim(p.dim(), end.len())?;
                if !(*ramp_time > 0.0 && ramp_time.is_finite()) {
                    return Err(Error::input("ramp_time must be positive"));
                }
                let (start, end, ramp) = (start.clone(), end.clone(), *ramp_time);
                let entries = matrix.clone();
                let feedforward = p.is_feedforward();
                let c = DynamicCoefficients::time_only(
                    p,
                    move |t, out| {
                        let s = (t / ramp).min(1.0);
                        for i in 0..out.len() {
                            out[i] = start[i] + (end[i] - start[i]) * s;
                        }
                    },
                    move |_, out| out.entries_mut().copy_from_slice(entries.entries()),
                )?;
                Ok(c.with_feedforward(feedforward))
            }
            CoefficientCatalog::StateDamped { drift, damping, matrix } => {
                let p = RoutingMatrix::new(matrix.clone())?;
                check_dim(p.dim(), drift.len())?;
                if !(*damping >= 0.0 && damping.is_finite()) {
                    return Err(Error::input("damping must be nonnegative"));
                }
                let (base, k) = (drift.clone(), *damping);
                let entries = matrix.clone();
                let feedforward = p.is_feedforward();
                let c = DynamicCoefficients::new(
                    p,
                    k,
                    Arc::new(move |_, l, _, out| {
                        for i in 0..out.len() {
                            out[i] = base[i] - k * l[i] / (1.0 + l[i]);
                        }
                    }),
                    Arc::new(move |_, _, _, out| out.entries_mut().copy_from_slice(entries.entries())),
                )?;
                Ok(c.with_feedforward(feedforward))
            }
        }
    }
}
