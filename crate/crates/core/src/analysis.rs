//! Finite-horizon verdicts for asymptotic statements, stability, coupling
//! detection and empirical distribution comparison.
//!
//! Asymptotic claims such as "`L_i → ∞`" or "`lim inf X_i = -∞`" cannot be
//! decided from a finite path. Each check here returns a three-valued
//! [`Verdict`] together with the statistic that produced it, so a report can
//! be audited.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mmatrix::RoutingMatrix;
use crate::processes::MapSpec;
use crate::skorohod::{regulator_bounds, VectorPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub coordinate: usize,
    pub verdict: Verdict,
    pub witness: f64,
    pub horizon: f64,
}

/// Default divergence threshold for an initial vector `a`:
/// `10·‖a‖∞ + 10`.
pub fn default_threshold(a: &[f64]) -> f64 {
    10.0 * a.iter().fold(0.0_f64, |m, v| m.max(v.abs())) + 10.0
}

/// Fraction of the horizon inspected for recent growth.
const ACTIVITY_WINDOW: f64 = 0.25;
/// Fraction of the horizon over which a bounded path must be flat.
const FLAT_WINDOW: f64 = 0.5;

fn growth_since(path: &VectorPath, i: usize, fraction: f64) -> f64 {
    let horizon = path.grid().horizon();
    let earlier = path.value_at((1.0 - fraction) * horizon).unwrap_or(path.point(0))[i];
    path.last()[i] - earlier
}

fn activity_eps(level: f64) -> f64 {
    1e-9 * level.abs().max(1.0)
}

/// Divergence proxy for a nondecreasing path: satisfied when the terminal
/// value reaches `threshold` and the path still grew in the final quarter
/// of the horizon; violated when it stayed flat over the final half and
/// below `threshold`.
pub fn regulator_divergence(l: &VectorPath, threshold: f64) -> Vec<ConditionVerdict> {
    let horizon = l.grid().horizon();
    (0..l.dim())
        .map(|i| {
            let terminal = l.last()[i];
            let eps = activity_eps(terminal);
            let verdict = if terminal >= threshold && growth_since(l, i, ACTIVITY_WINDOW) > eps {
                Verdict::Satisfied
            } else if terminal < threshold && growth_since(l, i, FLAT_WINDOW) <= eps {
                Verdict::Violated
            } else {
                Verdict::Inconclusive
            };
            ConditionVerdict {
                coordinate: i,
                verdict,
                witness: terminal,
                horizon,
            }
        })
        .collect()
}

/// Proxy for the sufficient condition "`X_i` or `(R⁻¹X)_i` has lim inf
/// `-∞`": satisfied when either minimum over the grid is at most
/// `-threshold`. Never returns `Violated`.
pub fn sufficient_condition(x: &VectorPath, routing: &RoutingMatrix, threshold: f64) -> Result<Vec<ConditionVerdict>> {
    check_dim(routing.dim(), x.dim())?;
    let n = x.dim();
    let inverse = routing.inverse();
    let mut min_x = vec![f64::INFINITY; n];
    let mut min_rx = vec![f64::INFINITY; n];
    let mut rx = vec![0.0; n];
    for p in x.points() {
        inverse.mul_vec_into(p, &mut rx);
        for i in 0..n {
            min_x[i] = min_x[i].min(p[i]);
            min_rx[i] = min_rx[i].min(rx[i]);
        }
    }
    let horizon = x.grid().horizon();
    Ok((0..n)
        .map(|i| {
            let witness = min_x[i].min(min_rx[i]);
            let verdict = if witness <= -threshold {
                Verdict::Satisfied
            } else {
                Verdict::Inconclusive
            };
            ConditionVerdict {
                coordinate: i,
                verdict,
                witness,
                horizon,
            }
        })
        .collect())
}

/// Proxy for the necessary condition "`(R⁻¹M)_i` is unbounded": satisfied
/// when it reaches `threshold`; violated when it stays below `threshold` and
/// flat over the final half of the horizon.
pub fn necessary_condition(x: &VectorPath, routing: &RoutingMatrix, threshold: f64) -> Result<Vec<ConditionVerdict>> {
    let bounds = regulator_bounds(x, routing)?;
    let upper = &bounds.upper;
    let horizon = x.grid().horizon();
    Ok((0..x.dim())
        .map(|i| {
            let terminal = upper.last()[i];
            let verdict = if terminal >= threshold {
                Verdict::Satisfied
            } else if growth_since(upper, i, FLAT_WINDOW) <= activity_eps(terminal) {
                Verdict::Violated
            } else {
                Verdict::Inconclusive
            };
            ConditionVerdict {
                coordinate: i,
                verdict,
                witness: terminal,
                horizon,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    /// `R⁻¹·rho`; stability needs every entry strictly negative.
    pub margins: Vec<f64>,
}

pub fn stability_check(rho: &[f64], routing: &RoutingMatrix) -> Result<StabilityVerdict> {
    check_dim(routing.dim(), rho.len())?;
    if rho.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("mean drift must be finite"));
    }
    let margins = routing.apply_inverse(rho);
    Ok(StabilityVerdict {
        stable: margins.iter().all(|&m| m < 0.0),
        margins,
    })
}

/// Long-run drift `lim X(t)/t` of a Markov-additive process.
pub fn map_mean_drift(spec: &MapSpec) -> Result<Vec<f64>> {
    spec.mean_drift()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    pub coupled: bool,
    /// First grid time from which the paths stay within tolerance.
    pub time: Option<f64>,
    pub index: Option<usize>,
    pub horizon: f64,
}

/// Streaming coupling detection over a common grid.
#[derive(Clone, Debug)]
pub struct CouplingTracker {
    tol: f64,
    pending: bool,
    candidate: Option<(usize, f64)>,
    observed: usize,
    horizon: f64,
}

impl CouplingTracker {
    pub fn new(tol: f64) -> CouplingTracker {
        CouplingTracker {
            tol,
            pending: true,
            candidate: None,
            observed: 0,
            horizon: 0.0,
        }
    }

    pub fn observe(&mut self, t: f64, wa: &[f64], w0: &[f64]) {
        let apart = wa.iter().zip(w0).any(|(a, b)| !((a - b).abs() <= self.tol));
        if apart {
            self.pending = true;
            self.candidate = None;
        } else if self.pending {
            self.candidate = Some((self.observed, t));
            self.pending = false;
        }
        self.observed += 1;
        self.horizon = t;
    }

    pub fn finish(&self) -> CouplingResult {
        CouplingResult {
            coupled: self.candidate.is_some(),
            time: self.candidate.map(|c| c.1),
            index: self.candidate.map(|c| c.0),
            horizon: self.horizon,
        }
    }
}

/// Earliest grid time after which `‖Wa - W0‖∞ ≤ tol` through the horizon.
pub fn coupling_time(wa: &VectorPath, w0: &VectorPath, tol: f64) -> Result<CouplingResult> {
    check_dim(wa.dim(), w0.dim())?;
    if !wa.grid().same_as(w0.grid()) {
        return Err(Error::input("coupling needs both paths on the same grid"));
    }
    let mut tracker = CouplingTracker::new(tol);
    for (k, t) in wa.grid().iter().enumerate() {
        tracker.observe(t, wa.point(k), w0.point(k));
    }
    Ok(tracker.finish())
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::input("both samples must be nonempty"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::input("samples contain NaN"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmatrix::Matrix;
    use crate::processes::Distribution;
    use crate::processes::{fixture, LevyParams, TransitionJump};
    use crate::skorohod::{reflect, shift, TimeGrid, DEFAULT_TOL};
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn ramp(horizon: f64) -> VectorPath {
        fixture("ramp", &BTreeMap::new(), &TimeGrid::uniform(horizon, 0.01).unwrap()).unwrap()
    }

    fn sine_pair(horizon: f64) -> VectorPath {
        fixture(
            "sine_pair",
            &BTreeMap::new(),
            &TimeGrid::uniform(horizon, 1e-3).unwrap(),
        )
        .unwrap()
    }

    fn feedforward() -> RoutingMatrix {
        RoutingMatrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap()
    }

    fn verdicts(v: &[ConditionVerdict]) -> Vec<Verdict> {
        v.iter().map(|c| c.verdict).collect()
    }

    #[test]
    fn bounded_ramp_regulator_is_violated() {
        let sol = reflect(&ramp(10.0), &RoutingMatrix::zero(1), DEFAULT_TOL).unwrap();
        let v = regulator_divergence(&sol.l, default_threshold(&[0.0]));
        assert_eq!(verdicts(&v), vec![Verdict::Violated]);
        assert_eq!(v[0].witness, 1.0);
        assert_eq!(v[0].horizon, 10.0);
    }

    #[test]
    fn sine_pair_regulators_diverge() {
        let sol = reflect(&sine_pair(8.0 * PI), &feedforward(), DEFAULT_TOL).unwrap();
        let v = regulator_divergence(&sol.l, 1.0);
        assert_eq!(verdicts(&v), vec![Verdict::Satisfied, Verdict::Satisfied]);
    }

    #[test]
    fn zero_regulator_is_violated() {
        let l = VectorPath::zeros(TimeGrid::uniform(5.0, 1.0).unwrap(), 3);
        assert!(regulator_divergence(&l, 1.0)
            .iter()
            .all(|c| c.verdict == Verdict::Violated));
    }

    #[test]
    fn sufficient_condition_examples() {
        let v = sufficient_condition(&sine_pair(8.0 * PI), &feedforward(), 10.0).unwrap();
        assert_eq!(verdicts(&v), vec![Verdict::Satisfied, Verdict::Inconclusive]);

        let zero = VectorPath::zeros(TimeGrid::uniform(5.0, 1.0).unwrap(), 2);
        let v = sufficient_condition(&zero, &feedforward(), 10.0).unwrap();
        assert!(v.iter().all(|c| c.verdict == Verdict::Inconclusive));

        let grid = TimeGrid::uniform(100.0, 0.5).unwrap();
        let line = VectorPath::from_fn(grid, 1, |t, x| x[0] = -t).unwrap();
        let v = sufficient_condition(&line, &RoutingMatrix::zero(1), 10.0).unwrap();
        assert_eq!(verdicts(&v), vec![Verdict::Satisfied]);
    }

    #[test]
    fn necessary_condition_examples() {
        let grid = TimeGrid::uniform(5.0, 0.5).unwrap();
        let up = VectorPath::from_fn(grid, 2, |t, x| x.iter_mut().for_each(|v| *v = t)).unwrap();
        let v = necessary_condition(&up, &feedforward(), 1.0).unwrap();
        assert!(v.iter().all(|c| c.verdict == Verdict::Violated && c.witness == 0.0));

        let v = necessary_condition(&sine_pair(8.0 * PI), &feedforward(), 10.0).unwrap();
        assert_eq!(v[1].verdict, Verdict::Satisfied);

        let v = necessary_condition(&ramp(10.0), &RoutingMatrix::zero(1), 2.0).unwrap();
        assert_eq!(verdicts(&v), vec![Verdict::Violated]);
        assert_eq!(v[0].witness, 1.0);
    }

    #[test]
    fn stability_examples() {
        let s = stability_check(&[-1.0], &RoutingMatrix::zero(1)).unwrap();
        assert!(s.stable);
        assert_eq!(s.margins, vec![-1.0]);
        let s = stability_check(&[-1.0, 0.5], &feedforward()).unwrap();
        assert!(s.stable);
        assert_eq!(s.margins, vec![-1.0, -0.5]);
        assert!(!stability_check(&[0.0, 0.0], &feedforward()).unwrap().stable);
    }

    #[test]
    fn map_drift_with_transition_jump() {
        let state = |d: f64| LevyParams {
            drift: vec![d],
            jump_rates: vec![],
            jumps: vec![],
            covariance: None,
        };
        let spec = MapSpec {
            generator: Matrix::from_rows(&[&[-1.0, 1.0], &[1.0, -1.0]]),
            states: vec![state(1.0), state(-3.0)],
            transition_jumps: vec![
                TransitionJump {
                    from: 0,
                    to: 1,
                    jumps: vec![Distribution::Deterministic { value: 0.5 }],
                },
                TransitionJump {
                    from: 1,
                    to: 0,
                    jumps: vec![Distribution::Deterministic { value: 0.0 }],
                },
            ],
            initial_state: None,
        };
        assert_eq!(map_mean_drift(&spec).unwrap(), vec![-0.75]);
    }

    #[test]
    fn coupling_examples() {
        let x = ramp(3.0);
        let routing = RoutingMatrix::zero(1);
        let w0 = reflect(&x, &routing, DEFAULT_TOL).unwrap().w;
        let same = coupling_time(&w0, &w0, 1e-9).unwrap();
        assert_eq!((same.coupled, same.time), (true, Some(0.0)));

        let half = reflect(&shift(&[0.5], &x).unwrap(), &routing, DEFAULT_TOL).unwrap().w;
        let c = coupling_time(&half, &w0, 1e-9).unwrap();
        assert!(c.coupled);
        assert!((c.time.unwrap() - 0.5).abs() <= 0.01);

        let two = reflect(&shift(&[2.0], &x).unwrap(), &routing, DEFAULT_TOL).unwrap().w;
        assert!(!coupling_time(&two, &w0, 1e-9).unwrap().coupled);
    }

    #[test]
    fn coupling_needs_common_grid() {
        let a = VectorPath::zeros(TimeGrid::uniform(1.0, 0.5).unwrap(), 1);
        let b = VectorPath::zeros(TimeGrid::uniform(1.0, 0.25).unwrap(), 1);
        assert!(coupling_time(&a, &b, 1e-9).is_err());
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(ks_distance(&[0.0; 4], &[1.0; 4]).unwrap(), 1.0);
        assert!((ks_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(ks_distance(&[], &[1.0]).is_err());
    }
}
