//! Streaming path samplers: each call extends the path to a later time, so
//! long paths never need to be stored.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use super::fixtures;
use super::spec::{stationary_distribution, LevyParams, MapSpec, ProcessSpec};
use super::Distribution;
use crate::error::{check_dim, Error, Result};
use crate::mmatrix::Matrix;

/// Random-stream components. Every (component, coordinate) pair draws from
/// its own stream of the seed.
mod component {
    pub const GAUSS: u64 = 1;
    pub const JUMP_CLOCK: u64 = 2;
    pub const JUMP_SIZE: u64 = 3;
    pub const REGIME: u64 = 4;
    pub const TRANSITION_JUMP: u64 = 5;
    pub const INTERARRIVAL: u64 = 6;
    pub const CLAIM: u64 = 7;
    pub const INITIAL_STATE: u64 = 8;
}

fn stream(seed: u64, component: u64, coord: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((component << 32) | coord as u64);
    rng
}

fn streams(seed: u64, component: u64, n: usize) -> Vec<ChaCha8Rng> {
    (0..n).map(|i| stream(seed, component, i)).collect()
}

/// A path generator queried at nondecreasing times starting from zero.
///
/// Values at a given sequence of times depend only on that sequence and the
/// seed, so a grid and any prefix of it produce identical values.
pub trait PathSampler: Send {
    fn dim(&self) -> usize;

    /// Writes `X(t)` into `out`.
    fn sample_at(&mut self, t: f64, out: &mut [f64]) -> Result<()>;
}

/// Builds a sampler for a validated spec.
pub fn sampler(spec: &ProcessSpec, seed: u64) -> Result<Box<dyn PathSampler>> {
    spec.validate()?;
    Ok(match spec {
        ProcessSpec::Brownian { mu, covariance } => Box::new(MapSampler::new(
            &MapSpec {
                generator: Matrix::zeros(1),
                states: vec![LevyParams {
                    drift: mu.clone(),
                    jump_rates: vec![],
                    jumps: vec![],
                    covariance: Some(covariance.clone()),
                }],
                transition_jumps: vec![],
                initial_state: Some(0),
            },
            seed,
        )?),
        ProcessSpec::LevyCp(params) => Box::new(MapSampler::new(
            &MapSpec {
                generator: Matrix::zeros(1),
                states: vec![params.clone()],
                transition_jumps: vec![],
                initial_state: Some(0),
            },
            seed,
        )?),
        ProcessSpec::Map(map) => Box::new(MapSampler::new(map, seed)?),
        ProcessSpec::RenewalRisk {
            premiums,
            interarrivals,
            claims,
        } => Box::new(RenewalSampler {
            premiums: premiums.clone(),
            interarrivals: interarrivals.clone(),
            claims: claims.clone(),
            arrival_rngs: streams(seed, component::INTERARRIVAL, premiums.len()),
            claim_rngs: streams(seed, component::CLAIM, premiums.len()),
            next_arrival: vec![f64::NAN; premiums.len()],
            claim_sum: vec![0.0; premiums.len()],
            clock: Clock::default(),
        }),
        ProcessSpec::Fixture { name, params } => Box::new(FixtureSampler {
            name: name.clone(),
            params: params.clone(),
            dim: spec.dim(),
            clock: Clock::default(),
        }),
    })
}

#[derive(Clone, Copy, Debug, Default)]
struct Clock {
    last: Option<f64>,
}

impl Clock {
    /// Returns the previous query time (zero before the first query).
    fn advance(&mut self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::input(format!(
                "sample time must be finite and nonnegative, got {t}"
            )));
        }
        let prev = self.last.unwrap_or(0.0);
        if t < prev {
            return Err(Error::input(format!(
                "sample times must be nondecreasing ({t} after {prev})"
            )));
        }
        self.last = Some(t);
        Ok(prev)
    }
}

struct FixtureSampler {
    name: String,
    params: std::collections::BTreeMap<String, f64>,
    dim: usize,
    clock: Clock,
}

impl PathSampler for FixtureSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_at(&mut self, t: f64, out: &mut [f64]) -> Result<()> {
        check_dim(self.dim, out.len())?;
        self.clock.advance(t)?;
        fixtures::evaluate(&self.name, &self.params, t, out);
        Ok(())
    }
}

struct RenewalSampler {
    premiums: Vec<f64>,
    interarrivals: Vec<Distribution>,
    claims: Vec<Distribution>,
    arrival_rngs: Vec<ChaCha8Rng>,
    claim_rngs: Vec<ChaCha8Rng>,
    next_arrival: Vec<f64>,
    claim_sum: Vec<f64>,
    clock: Clock,
}

impl PathSampler for RenewalSampler {
    fn dim(&self) -> usize {
        self.premiums.len()
    }

    fn sample_at(&mut self, t: f64, out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), out.len())?;
        self.clock.advance(t)?;
        for i in 0..out.len() {
            if self.next_arrival[i].is_nan() {
                self.next_arrival[i] = self.interarrivals[i].sample(&mut self.arrival_rngs[i]);
            }
            while self.next_arrival[i] <= t {
                self.claim_sum[i] += self.claims[i].sample(&mut self.claim_rngs[i]);
                self.next_arrival[i] += self.interarrivals[i].sample(&mut self.arrival_rngs[i]);
            }
            out[i] = self.premiums[i] * t - self.claim_sum[i] + 0.0;
        }
        Ok(())
    }
}

/// Markov-additive sampler. Brownian and Lévy specs are the one-regime
/// case.
struct MapSampler {
    dim: usize,
    states: Vec<LevyParams>,
    generator: Matrix,
    /// Transition jump laws indexed by `from * regimes + to`.
    transition: Vec<Option<Vec<Distribution>>>,
    factors: Vec<Option<Matrix>>,
    covariances: Vec<Option<Matrix>>,
    regime: usize,
    regime_rng: ChaCha8Rng,
    next_switch: f64,
    last_switch: f64,
    drift_base: Vec<f64>,
    jump_sum: Vec<f64>,
    hazard: Vec<f64>,
    clock_rngs: Vec<ChaCha8Rng>,
    size_rngs: Vec<ChaCha8Rng>,
    transition_rngs: Vec<ChaCha8Rng>,
    gauss_rngs: Vec<ChaCha8Rng>,
    gauss: Vec<f64>,
    z: Vec<f64>,
    occupation: Vec<f64>,
    clock: Clock,
}

impl MapSampler {
    fn new(spec: &MapSpec, seed: u64) -> Result<MapSampler> {
        let n = spec.dim();
        let m = spec.regimes();
        let regime = match spec.initial_state {
            Some(s) => s,
            None => {
                let pi = stationary_distribution(&spec.generator)?;
                let u: f64 = stream(seed, component::INITIAL_STATE, 0).random();
                pick(&pi, u)
            }
        };
        let mut transition = vec![None; m * m];
        for j in &spec.transition_jumps {
            if j.from != j.to {
                transition[j.from * m + j.to] = Some(j.jumps.clone());
            }
        }
        let factors = spec
            .states
            .iter()
            .map(|s| s.covariance.as_ref().map(Matrix::psd_factor).transpose())
            .collect::<Result<Vec<_>>>()?;
        let has_gauss = factors.iter().flatten().any(|f| !f.is_zero());
        let mut clock_rngs = streams(seed, component::JUMP_CLOCK, n);
        let hazard = clock_rngs.iter_mut().map(|r| r.sample::<f64, _>(Exp1)).collect();
        let mut sampler = MapSampler {
            dim: n,
            states: spec.states.clone(),
            generator: spec.generator.clone(),
            transition,
            covariances: spec.states.iter().map(|s| s.covariance.clone()).collect(),
            factors,
            regime,
            regime_rng: stream(seed, component::REGIME, 0),
            next_switch: f64::INFINITY,
            last_switch: 0.0,
            drift_base: vec![0.0; n],
            jump_sum: vec![0.0; n],
            hazard,
            clock_rngs,
            size_rngs: streams(seed, component::JUMP_SIZE, n),
            transition_rngs: streams(seed, component::TRANSITION_JUMP, n),
            gauss_rngs: if has_gauss {
                streams(seed, component::GAUSS, n)
            } else {
                Vec::new()
            },
            gauss: vec![0.0; n],
            z: vec![0.0; n],
            occupation: vec![0.0; m],
            clock: Clock::default(),
        };
        sampler.next_switch = sampler.holding_time(0.0);
        Ok(sampler)
    }

    fn holding_time(&mut self, from: f64) -> f64 {
        let rate = -self.generator.get(self.regime, self.regime);
        if rate > 0.0 {
            from + self.regime_rng.sample::<f64, _>(Exp1) / rate
        } else {
            f64::INFINITY
        }
    }

    /// Runs the jump clocks of the current regime over `[from, to]`.
    fn run_jumps(&mut self, from: f64, to: f64) {
        let state = &self.states[self.regime];
        for i in 0..self.dim {
            let rate = state.jump_rate(i);
            if rate <= 0.0 {
                continue;
            }
            let mut cursor = from;
            loop {
                let event = cursor + self.hazard[i] / rate;
                if event > to {
                    self.hazard[i] -= rate * (to - cursor);
                    break;
                }
                self.jump_sum[i] += state.jumps[i].sample(&mut self.size_rngs[i]);
                self.hazard[i] = self.clock_rngs[i].sample(Exp1);
                cursor = event;
            }
        }
    }

    fn switch_regime(&mut self, at: f64) {
        let m = self.states.len();
        let from = self.regime;
        let drift = &self.states[from].drift;
        for i in 0..self.dim {
            self.drift_base[i] += drift[i] * (at - self.last_switch);
        }
        self.last_switch = at;
        let total = -self.generator.get(from, from);
        let u: f64 = self.regime_rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut to = from;
        for j in (0..m).filter(|&j| j != from) {
            let q = self.generator.get(from, j);
            if q > 0.0 {
                to = j;
                acc += q;
                if u < acc {
                    break;
                }
            }
        }
        if let Some(jumps) = &self.transition[from * m + to] {
            for (i, d) in jumps.iter().enumerate() {
                self.jump_sum[i] += d.sample(&mut self.transition_rngs[i]);
            }
        }
        self.regime = to;
        self.next_switch = self.holding_time(at);
    }

    fn gaussian_step(&mut self, dt: f64) -> Result<()> {
        if self.gauss_rngs.is_empty() || dt <= 0.0 {
            return Ok(());
        }
        for (z, rng) in self.z.iter_mut().zip(&mut self.gauss_rngs) {
            *z = rng.sample(StandardNormal);
        }
        let mut used = self
            .occupation
            .iter()
            .enumerate()
            .filter(|(_, &o)| o > 0.0)
            .map(|(r, _)| r);
        let first = used.next().unwrap_or(self.regime);
        let mixed;
        let (factor, scale) = if used.next().is_none() {
            (self.factors[first].as_ref(), dt.sqrt())
        } else {
            let mut cov = Matrix::zeros(self.dim);
            for r in (0..self.occupation.len()).filter(|&r| self.occupation[r] > 0.0) {
                if let Some(c) = &self.covariances[r] {
                    let weighted =
                        Matrix::from_entries(self.dim, c.entries().iter().map(|v| v * self.occupation[r]).collect())?;
                    cov = cov.add(&weighted);
                }
            }
            mixed = cov.psd_factor()?;
            (Some(&mixed), 1.0)
        };
        if let Some(f) = factor {
            for i in 0..self.dim {
                let mut s = 0.0;
                for j in 0..=i {
                    s += f.get(i, j) * self.z[j];
                }
                self.gauss[i] += scale * s;
            }
        }
        Ok(())
    }
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

impl PathSampler for MapSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_at(&mut self, t: f64, out: &mut [f64]) -> Result<()> {
        check_dim(self.dim, out.len())?;
        let prev = self.clock.advance(t)?;
        self.occupation.iter_mut().for_each(|o| *o = 0.0);
        let mut cursor = prev;
        while self.next_switch <= t {
            let at = self.next_switch;
            self.run_jumps(cursor, at);
            self.occupation[self.regime] += at - cursor;
            self.switch_regime(at);
            cursor = at;
        }
        self.run_jumps(cursor, t);
        self.occupation[self.regime] += t - cursor;
        self.gaussian_step(t - prev)?;
        let drift = &self.states[self.regime].drift;
        for i in 0..self.dim {
            let x = self.drift_base[i] + drift[i] * (t - self.last_switch);
            out[i] = x + self.jump_sum[i] + self.gauss[i] + 0.0;
        }
        Ok(())
    }
}
