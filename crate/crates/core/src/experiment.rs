//! Seeded experiments on initial-condition insensitivity.
//!
//! Every seed leg streams its input path through the solvers, so horizons
//! with hundreds of millions of grid points run in constant memory. Legs run
//! concurrently on the current rayon pool and are merged in seed order; the
//! report is a pure function of the configuration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    default_threshold, ks_distance, necessary_condition, regulator_divergence, sufficient_condition, ConditionVerdict,
    CouplingTracker,
};
use crate::dynamic::{CoefficientCatalog, CouplingExperiment, DynamicCoefficients, DynamicReflector};
use crate::error::{check_dim, Error, Result};
use crate::mmatrix::{Matrix, RoutingMatrix};
use crate::processes::{generate, sampler, PathSampler, ProcessSpec};
use crate::skorohod::{reflect, DifferenceTracker, Reflector, TimeGrid, DEFAULT_TOL};

pub const SCHEMA: &str = "orthant-experiment/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Irrelevance,
    Coupling,
    Stationary,
    Conditions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingConfig {
    Matrix(Matrix),
    Dynamic(CoefficientCatalog),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub base: u64,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub solver: f64,
    pub coupling: f64,
    /// Divergence threshold; `10·max‖a‖∞ + 10` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict_threshold: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            solver: DEFAULT_TOL,
            coupling: 1e-6,
            verdict_threshold: None,
        }
    }
}

/// One long path from zero, sampled at regular times after a burn-in, as a
/// reference for the stationary law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicConfig {
    pub horizon: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: f64,
    /// Defaults to `seeds.base + seeds.count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_burn_in() -> f64 {
    100.0
}

fn default_sample_every() -> f64 {
    1.0
}

fn default_series_points() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub process: ProcessSpec,
    pub routing: RoutingConfig,
    pub initials: Vec<Vec<f64>>,
    pub grid: GridConfig,
    pub seeds: SeedConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ergodic: Option<ErgodicConfig>,
    /// Number of checkpoints in the reported time series.
    #[serde(default = "default_series_points")]
    pub series_points: usize,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig = serde_json::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid;
        if !(g.step > 0.0 && g.step.is_finite()) {
            return Err(Error::input("grid step must be positive"));
        }
        if !(g.horizon >= g.step && g.horizon.is_finite()) {
            return Err(Error::input("grid horizon must be at least one step"));
        }
        if self.seeds.count == 0 {
            return Err(Error::input("seed count must be at least 1"));
        }
        if self.initials.is_empty() {
            return Err(Error::input("at least one initial vector is required"));
        }
        self.process.validate()?;
        let n = self.process.dim();
        for a in &self.initials {
            check_dim(n, a.len())?;
            if a.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::input("initial vectors must be finite and nonnegative"));
            }
        }
        let t = self.tolerances;
        if !(t.solver > 0.0 && t.coupling > 0.0) {
            return Err(Error::input("tolerances must be positive"));
        }
        if let Some(e) = self.ergodic {
            if !(e.horizon > e.burn_in && e.burn_in >= 0.0 && e.sample_every > 0.0) {
                return Err(Error::input(
                    "ergodic run needs horizon > burn_in >= 0 and sample_every > 0",
                ));
            }
        }
        match (&self.routing, self.kind) {
            (RoutingConfig::Dynamic(_), ExperimentKind::Conditions) => {
                Err(Error::input("condition experiments need a constant routing matrix"))
            }
            _ => Ok(()),
        }
        .and_then(|_| self.routing.build().map(|_| ()))
        .and_then(|_| check_dim(n, self.routing.dim()?))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.seeds.count as u64)
            .map(|j| self.seeds.base.wrapping_add(j))
            .collect()
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.grid.horizon, self.grid.step)
    }

    fn threshold(&self) -> f64 {
        self.tolerances
            .verdict_threshold
            .unwrap_or_else(|| self.initials.iter().map(|a| default_threshold(a)).fold(10.0, f64::max))
    }
}

/// Built routing: a constant matrix or dynamic coefficients.
#[derive(Clone, Debug)]
pub enum Routing {
    Constant(RoutingMatrix),
    Dynamic(DynamicCoefficients),
}

impl RoutingConfig {
    pub fn build(&self) -> Result<Routing> {
        Ok(match self {
            RoutingConfig::Matrix(m) => Routing::Constant(RoutingMatrix::new(m.clone())?),
            RoutingConfig::Dynamic(c) => Routing::Dynamic(c.build()?),
        })
    }

    fn dim(&self) -> Result<usize> {
        Ok(match self.build()? {
            Routing::Constant(r) => r.dim(),
            Routing::Dynamic(c) => c.dim(),
        })
    }
}

impl Routing {
    fn dim(&self) -> usize {
        match self {
            Routing::Constant(r) => r.dim(),
            Routing::Dynamic(c) => c.dim(),
        }
    }

    /// Transform for the monotonicity audit and, for constant routing, the
    /// upper regulator gap `R⁻¹a`.
    fn audit(&self, a: &[f64]) -> (Matrix, Option<Vec<f64>>) {
        match self {
            Routing::Constant(r) => (r.inverse().clone(), Some(r.apply_inverse(a))),
            Routing::Dynamic(c) => {
                let gap = c.is_constant().then(|| c.bound().apply_inverse(a));
                (c.bound().inverse().clone(), gap)
            }
        }
    }
}

/// A streaming solver for `a + X` under either kind of routing.
enum Leg<'a> {
    Constant {
        reflector: Reflector<'a>,
        a: Vec<f64>,
        shifted: Vec<f64>,
    },
    Dynamic(DynamicReflector<'a>),
}

impl<'a> Leg<'a> {
    fn new(routing: &'a Routing, a: &[f64], tol: f64) -> Result<Leg<'a>> {
        Ok(match routing {
            Routing::Constant(r) => {
                check_dim(r.dim(), a.len())?;
                Leg::Constant {
                    reflector: Reflector::new(r, tol)?,
                    a: a.to_vec(),
                    shifted: vec![0.0; a.len()],
                }
            }
            Routing::Dynamic(c) => Leg::Dynamic(DynamicReflector::new(c, a, tol)?),
        })
    }

    fn step(&mut self, t: f64, x: &[f64]) -> Result<()> {
        match self {
            Leg::Constant { reflector, a, shifted } => {
                for i in 0..x.len() {
                    shifted[i] = x[i] + a[i];
                }
                reflector.step(shifted)
            }
            Leg::Dynamic(d) => d.step(t, x),
        }
    }

    fn w(&self) -> &[f64] {
        match self {
            Leg::Constant { reflector, .. } => reflector.w(),
            Leg::Dynamic(d) => d.w(),
        }
    }

    fn l(&self) -> &[f64] {
        match self {
            Leg::Constant { reflector, .. } => reflector.l(),
            Leg::Dynamic(d) => d.l(),
        }
    }
}

/// A named time series carried by the report for external plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrrelevanceSeed {
    pub seed: u64,
    pub initial_sup: f64,
    pub terminal_sup: f64,
    pub terminal_difference: Vec<f64>,
    /// `X(t_K)`.
    pub terminal_x: Vec<f64>,
    pub max_transformed_increase: f64,
    pub ordering_ok: bool,
    pub monotone_ok: bool,
    pub regulators_ok: bool,
    /// `‖D‖∞` at the series checkpoints.
    #[serde(skip)]
    pub checkpoints: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrrelevanceSummary {
    pub a: Vec<f64>,
    pub median_terminal_sup: f64,
    pub mean_terminal_sup: f64,
    pub ordering_failures: usize,
    pub monotone_failures: usize,
    pub regulator_failures: usize,
    pub seeds: Vec<IrrelevanceSeed>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSummary {
    pub a: Vec<f64>,
    pub experiment: CouplingExperiment,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalSample {
    pub a: Vec<f64>,
    /// Terminal `W` per coordinate, in seed order.
    pub samples: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsEntry {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// KS distance per coordinate.
    pub per_coordinate: Vec<f64>,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicSummary {
    pub seed: u64,
    pub samples: usize,
    /// KS distance between each terminal sample and the ergodic sample.
    pub ks: Vec<KsEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionsSeed {
    pub seed: u64,
    pub sufficient: Vec<ConditionVerdict>,
    pub necessary: Vec<ConditionVerdict>,
    /// Divergence verdicts for `L(a + X)`, one list per initial vector.
    pub divergence: Vec<Vec<ConditionVerdict>>,
    /// Terminal `W(a+X) - W(X)` per initial vector.
    pub terminal_difference: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExperimentResults {
    Irrelevance {
        initials: Vec<IrrelevanceSummary>,
    },
    Coupling {
        initials: Vec<CouplingSummary>,
    },
    Stationary {
        terminal: Vec<TerminalSample>,
        ks: Vec<KsEntry>,
        #[serde(skip_serializing_if = "Option::is_none")]
        ergodic: Option<ErgodicSummary>,
    },
    Conditions {
        threshold: f64,
        seeds: Vec<ConditionsSeed>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub config: ExperimentConfig,
    pub results: ExperimentResults,
    pub series: Vec<Series>,
}

impl ExperimentReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }
}

/// Grid indices of the series checkpoints.
fn checkpoints(len: usize, points: usize) -> Vec<usize> {
    let last = len - 1;
    let points = points.max(1).min(last.max(1));
    let mut idx: Vec<usize> = (0..=points).map(|j| j * last / points).collect();
    idx.dedup();
    idx
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let routing = config.routing.build()?;
    let grid = config.grid()?;
    let (results, series) = match config.kind {
        ExperimentKind::Irrelevance => irrelevance(config, &routing, &grid)?,
        ExperimentKind::Coupling => coupling(config, &routing, &grid)?,
        ExperimentKind::Stationary => (stationary(config, &routing, &grid)?, Vec::new()),
        ExperimentKind::Conditions => (conditions(config, &routing, &grid)?, Vec::new()),
    };
    Ok(ExperimentReport {
        schema: SCHEMA.to_string(),
        config: config.clone(),
        results,
        series,
    })
}

fn irrelevance_leg(
    config: &ExperimentConfig,
    routing: &Routing,
    grid: &TimeGrid,
    marks: &[usize],
    a: &[f64],
    seed: u64,
) -> Result<IrrelevanceSeed> {
    let tol = config.tolerances.solver;
    let n = routing.dim();
    let mut source = sampler(&config.process, seed)?;
    let zero = vec![0.0; n];
    let mut base = Leg::new(routing, &zero, tol)?;
    let mut moved = Leg::new(routing, a, tol)?;
    let (transform, gap) = routing.audit(a);
    let mut tracker = DifferenceTracker::new(transform, gap, tol)?;
    let mut x = vec![0.0; n];
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut next_mark = 0;
    for (k, t) in grid.iter().enumerate() {
        source.sample_at(t, &mut x)?;
        base.step(t, &x)?;
        moved.step(t, &x)?;
        tracker.observe(t, moved.w(), moved.l(), base.w(), base.l());
        if next_mark < marks.len() && marks[next_mark] == k {
            checkpoints.push(sup(tracker.difference()));
            next_mark += 1;
        }
    }
    let report = tracker.finish();
    Ok(IrrelevanceSeed {
        seed,
        initial_sup: sup(&report.initial_difference),
        terminal_sup: report.terminal_sup,
        terminal_difference: report.terminal_difference.clone(),
        terminal_x: x,
        max_transformed_increase: report.max_transformed_increase,
        ordering_ok: report.checks.ordering,
        monotone_ok: report.checks.monotone,
        regulators_ok: report.checks.regulators,
        checkpoints,
    })
}

fn irrelevance(
    config: &ExperimentConfig,
    routing: &Routing,
    grid: &TimeGrid,
) -> Result<(ExperimentResults, Vec<Series>)> {
    let seeds = config.seeds();
    let marks = checkpoints(grid.len(), config.series_points);
    let times: Vec<f64> = marks.iter().map(|&k| grid.time(k)).collect();
    let mut summaries = Vec::new();
    let mut series = Vec::new();
    for (j, a) in config.initials.iter().enumerate() {
        let legs = seeds
            .par_iter()
            .map(|&seed| irrelevance_leg(config, routing, grid, &marks, a, seed))
            .collect::<Result<Vec<_>>>()?;
        let terminal: Vec<f64> = legs.iter().map(|l| l.terminal_sup).collect();
        let medians: Vec<f64> = (0..marks.len())
            .map(|m| median(&legs.iter().map(|l| l.checkpoints[m]).collect::<Vec<_>>()))
            .collect();
        let means: Vec<f64> = (0..marks.len())
            .map(|m| legs.iter().map(|l| l.checkpoints[m]).sum::<f64>() / legs.len() as f64)
            .collect();
        series.push(Series {
            name: format!("median_sup_difference_{j}"),
            t: times.clone(),
            values: medians,
        });
        series.push(Series {
            name: format!("mean_sup_difference_{j}"),
            t: times.clone(),
            values: means,
        });
        summaries.push(IrrelevanceSummary {
            a: a.clone(),
            median_terminal_sup: median(&terminal),
            mean_terminal_sup: terminal.iter().sum::<f64>() / terminal.len() as f64,
            ordering_failures: legs.iter().filter(|l| !l.ordering_ok).count(),
            monotone_failures: legs.iter().filter(|l| !l.monotone_ok).count(),
            regulator_failures: legs.iter().filter(|l| !l.regulators_ok).count(),
            seeds: legs,
        });
    }
    Ok((ExperimentResults::Irrelevance { initials: summaries }, series))
}

fn coupling_leg(
    config: &ExperimentConfig,
    routing: &Routing,
    grid: &TimeGrid,
    a: &[f64],
    seed: u64,
) -> Result<crate::analysis::CouplingResult> {
    let tol = config.tolerances.solver;
    let n = routing.dim();
    let mut source = sampler(&config.process, seed)?;
    let zero = vec![0.0; n];
    let mut base = Leg::new(routing, &zero, tol)?;
    let mut moved = Leg::new(routing, a, tol)?;
    let mut tracker = CouplingTracker::new(config.tolerances.coupling);
    let mut x = vec![0.0; n];
    for t in grid.iter() {
        source.sample_at(t, &mut x)?;
        base.step(t, &x)?;
        moved.step(t, &x)?;
        tracker.observe(t, moved.w(), base.w());
    }
    Ok(tracker.finish())
}

fn coupling(config: &ExperimentConfig, routing: &Routing, grid: &TimeGrid) -> Result<(ExperimentResults, Vec<Series>)> {
    let seeds = config.seeds();
    let marks = checkpoints(grid.len(), config.series_points);
    let times: Vec<f64> = marks.iter().map(|&k| grid.time(k)).collect();
    let horizon = grid.horizon();
    let bins = config.series_points.max(1);
    let mut summaries = Vec::new();
    let mut series = Vec::new();
    for (j, a) in config.initials.iter().enumerate() {
        let results = seeds
            .par_iter()
            .map(|&seed| coupling_leg(config, routing, grid, a, seed))
            .collect::<Result<Vec<_>>>()?;
        let experiment = CouplingExperiment::from_results(seeds.clone(), results);
        let width = horizon / bins as f64;
        let mut histogram: Vec<HistogramBin> = (0..bins)
            .map(|b| HistogramBin {
                lo: b as f64 * width,
                hi: (b + 1) as f64 * width,
                count: 0,
            })
            .collect();
        for &t in &experiment.coupling_times {
            let b = ((t / width) as usize).min(bins - 1);
            histogram[b].count += 1;
        }
        let total = seeds.len() as f64;
        let fraction: Vec<f64> = times
            .iter()
            .map(|&t| experiment.coupling_times.iter().filter(|&&c| c <= t).count() as f64 / total)
            .collect();
        series.push(Series {
            name: format!("coupled_fraction_{j}"),
            t: times.clone(),
            values: fraction,
        });
        summaries.push(CouplingSummary {
            a: a.clone(),
            experiment,
            histogram,
        });
    }
    Ok((ExperimentResults::Coupling { initials: summaries }, series))
}

fn terminal_leg(config: &ExperimentConfig, routing: &Routing, grid: &TimeGrid, seed: u64) -> Result<Vec<Vec<f64>>> {
    let n = routing.dim();
    let mut source = sampler(&config.process, seed)?;
    let mut legs = config
        .initials
        .iter()
        .map(|a| Leg::new(routing, a, config.tolerances.solver))
        .collect::<Result<Vec<_>>>()?;
    let mut x = vec![0.0; n];
    for t in grid.iter() {
        source.sample_at(t, &mut x)?;
        for leg in &mut legs {
            leg.step(t, &x)?;
        }
    }
    Ok(legs.iter().map(|l| l.w().to_vec()).collect())
}

fn ks_entry(a: &[f64], b: &[f64], xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<KsEntry> {
    let per_coordinate = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| ks_distance(x, y))
        .collect::<Result<Vec<_>>>()?;
    let distance = per_coordinate.iter().fold(0.0_f64, |m, &v| m.max(v));
    Ok(KsEntry {
        a: a.to_vec(),
        b: b.to_vec(),
        per_coordinate,
        distance,
    })
}

/// Samples `W(X)` every `sample_every` time units after `burn_in` on one
/// long path.
pub fn ergodic_samples(
    spec: &ProcessSpec,
    routing: &Routing,
    step: f64,
    ergodic: &ErgodicConfig,
    seed: u64,
    tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = routing.dim();
    let grid = TimeGrid::uniform(ergodic.horizon, step)?;
    let mut source: Box<dyn PathSampler> = sampler(spec, seed)?;
    let zero = vec![0.0; n];
    let mut leg = Leg::new(routing, &zero, tol)?;
    let mut x = vec![0.0; n];
    let mut samples = vec![Vec::new(); n];
    let mut next = ergodic.burn_in;
    let slack = 1e-9 * step;
    let mut j = 0u64;
    for t in grid.iter() {
        source.sample_at(t, &mut x)?;
        leg.step(t, &x)?;
        if t >= next - slack {
            for (s, w) in samples.iter_mut().zip(leg.w()) {
                s.push(*w);
            }
            j += 1;
            next = ergodic.burn_in + j as f64 * ergodic.sample_every;
        }
    }
    Ok(samples)
}

fn stationary(config: &ExperimentConfig, routing: &Routing, grid: &TimeGrid) -> Result<ExperimentResults> {
    let seeds = config.seeds();
    let n = routing.dim();
    let legs = seeds
        .par_iter()
        .map(|&seed| terminal_leg(config, routing, grid, seed))
        .collect::<Result<Vec<_>>>()?;
    let terminal: Vec<TerminalSample> = config
        .initials
        .iter()
        .enumerate()
        .map(|(j, a)| TerminalSample {
            a: a.clone(),
            samples: (0..n).map(|i| legs.iter().map(|leg| leg[j][i]).collect()).collect(),
        })
        .collect();
    let mut ks = Vec::new();
    for p in 0..terminal.len() {
        for q in p + 1..terminal.len() {
            ks.push(ks_entry(
                &terminal[p].a,
                &terminal[q].a,
                &terminal[p].samples,
                &terminal[q].samples,
            )?);
        }
    }
    let ergodic = match &config.ergodic {
        None => None,
        Some(e) => {
            let seed = e
                .seed
                .unwrap_or(config.seeds.base.wrapping_add(config.seeds.count as u64));
            let samples = ergodic_samples(
                &config.process,
                routing,
                config.grid.step,
                e,
                seed,
                config.tolerances.solver,
            )?;
            let ks = terminal
                .iter()
                .map(|s| ks_entry(&s.a, &[], &s.samples, &samples))
                .collect::<Result<Vec<_>>>()?;
            Some(ErgodicSummary {
                seed,
                samples: samples.first().map_or(0, Vec::len),
                ks,
            })
        }
    };
    Ok(ExperimentResults::Stationary { terminal, ks, ergodic })
}

fn conditions(config: &ExperimentConfig, routing: &Routing, grid: &TimeGrid) -> Result<ExperimentResults> {
    let Routing::Constant(r) = routing else {
        return Err(Error::input("condition experiments need a constant routing matrix"));
    };
    let threshold = config.threshold();
    let tol = config.tolerances.solver;
    let seeds = config
        .seeds()
        .par_iter()
        .map(|&seed| {
            let x = generate(&config.process, grid, seed)?;
            let base = reflect(&x, r, tol)?;
            let mut divergence = Vec::new();
            let mut terminal_difference = Vec::new();
            for a in &config.initials {
                let sol = reflect(&crate::skorohod::shift(a, &x)?, r, tol)?;
                divergence.push(regulator_divergence(&sol.l, threshold));
                terminal_difference.push(sol.w.last().iter().zip(base.w.last()).map(|(u, v)| u - v).collect());
            }
            Ok(ConditionsSeed {
                seed,
                sufficient: sufficient_condition(&x, r, threshold)?,
                necessary: necessary_condition(&x, r, threshold)?,
                divergence,
                terminal_difference,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResults::Conditions { threshold, seeds })
}
