use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Distribution;
use crate::error::{check_dim, Error, Result};
use crate::mmatrix::Matrix;

/// Drift, compound-Poisson jumps and an optional Gaussian part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyParams {
    pub drift: Vec<f64>,
    #[serde(default)]
    pub jump_rates: Vec<f64>,
    #[serde(default)]
    pub jumps: Vec<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Matrix>,
}

/// Jump law per coordinate applied when the chain moves `from → to`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionJump {
    pub from: usize,
    pub to: usize,
    pub jumps: Vec<Distribution>,
}

/// A Markov-additive process on finitely many regimes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    /// Rate matrix `Q` of the modulating chain.
    pub generator: Matrix,
    pub states: Vec<LevyParams>,
    #[serde(default)]
    pub transition_jumps: Vec<TransitionJump>,
    /// Starting regime; drawn from the stationary law when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<usize>,
}

/// Tagged description of an input path generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    /// `X(t) = mu·t + B(t)` with `B` a Brownian motion of the given
    /// covariance per unit time.
    Brownian {
        mu: Vec<f64>,
        covariance: Matrix,
    },
    LevyCp(LevyParams),
    Map(MapSpec),
    /// `X_i(t) = c_i·t - (claims of coordinate i arrived by t)`.
    RenewalRisk {
        premiums: Vec<f64>,
        interarrivals: Vec<Distribution>,
        claims: Vec<Distribution>,
    },
    Fixture {
        name: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

impl LevyParams {
    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn jump_rate(&self, i: usize) -> f64 {
        self.jump_rates.get(i).copied().unwrap_or(0.0)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::model("drift vector is empty"));
        }
        if self.drift.iter().any(|v| !v.is_finite()) {
            return Err(Error::model("drift must be finite"));
        }
        if !self.jump_rates.is_empty() {
            check_dim(n, self.jump_rates.len())?;
        }
        if self.jump_rates.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(Error::model("jump rates must be nonnegative and finite"));
        }
        if self.jump_rates.iter().any(|&r| r > 0.0) || !self.jumps.is_empty() {
            check_dim(n, self.jumps.len())?;
        }
        for d in &self.jumps {
            d.validate()?;
        }
        if let Some(c) = &self.covariance {
            check_dim(n, c.dim())?;
            c.psd_factor()?;
        }
        Ok(())
    }

    /// `drift + λ·E(jump)` per coordinate.
    pub fn mean_drift(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let rate = self.jump_rate(i);
                let jump = if rate > 0.0 { rate * self.jumps[i].mean() } else { 0.0 };
                self.drift[i] + jump
            })
            .collect()
    }
}

impl MapSpec {
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, LevyParams::dim)
    }

    pub fn regimes(&self) -> usize {
        self.states.len()
    }

    pub fn transition_jump(&self, from: usize, to: usize) -> Option<&[Distribution]> {
        self.transition_jumps
            .iter()
            .find(|j| j.from == from && j.to == to)
            .map(|j| j.jumps.as_slice())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let m = self.states.len();
        if m == 0 {
            return Err(Error::model("a Markov-additive process needs at least one regime"));
        }
        check_dim(m, self.generator.dim())?;
        let n = self.dim();
        for s in &self.states {
            check_dim(n, s.dim())?;
            s.validate()?;
        }
        for j in &self.transition_jumps {
            if j.from >= m || j.to >= m {
                return Err(Error::model(format!(
                    "transition jump {}→{} refers to a missing regime",
                    j.from, j.to
                )));
            }
            check_dim(n, j.jumps.len())?;
            for d in &j.jumps {
                d.validate()?;
            }
            if j.from == j.to && !j.jumps.iter().all(Distribution::is_zero) {
                return Err(Error::model("diagonal transition jumps must be the point mass at zero"));
            }
        }
        if let Some(s) = self.initial_state {
            if s >= m {
                return Err(Error::model(format!("initial regime {s} out of range")));
            }
        }
        stationary_distribution(&self.generator).map(|_| ())
    }

    /// Long-run drift: the `π`-average of the regime drifts plus the mean
    /// transition jumps weighted by `π_i·q_ij`.
    pub fn mean_drift(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let pi = stationary_distribution(&self.generator)?;
        let n = self.dim();
        let mut rho = vec![0.0; n];
        for (s, state) in self.states.iter().enumerate() {
            for (r, v) in rho.iter_mut().zip(state.mean_drift()) {
                *r += pi[s] * v;
            }
        }
        for j in &self.transition_jumps {
            if j.from == j.to {
                continue;
            }
            let flow = pi[j.from] * self.generator.get(j.from, j.to);
            for (r, d) in rho.iter_mut().zip(&j.jumps) {
                *r += flow * d.mean();
            }
        }
        Ok(rho)
    }
}

/// Stationary law `π` of an irreducible conservative rate matrix:
/// `πQ = 0`, `Σπ = 1`.
pub fn stationary_distribution(q: &Matrix) -> Result<Vec<f64>> {
    let m = q.dim();
    if m == 0 || !q.all_finite() {
        return Err(Error::model("rate matrix must be nonempty and finite"));
    }
    let scale = q.max_abs().max(1.0);
    for i in 0..m {
        for j in 0..m {
            if i != j && q.get(i, j) < 0.0 {
                return Err(Error::model(format!("negative off-diagonal rate at ({i}, {j})")));
            }
        }
        let row: f64 = q.row(i).iter().sum();
        if row.abs() > 1e-12 * scale {
            return Err(Error::model(format!("rate matrix row {i} sums to {row}, not 0")));
        }
    }
    if !is_irreducible(q) {
        return Err(Error::model("rate matrix is reducible"));
    }
    if m == 1 {
        return Ok(vec![1.0]);
    }
    // Qᵗπ = 0 with the last equation replaced by the normalization.
    let mut a = q.transpose();
    for j in 0..m {
        a.set(m - 1, j, 1.0);
    }
    let mut rhs = vec![0.0; m];
    rhs[m - 1] = 1.0;
    let pi = a
        .solve(&rhs)
        .ok_or_else(|| Error::model("stationary equations are singular"))?;
    Ok(pi.into_iter().map(|p| p.max(0.0)).collect())
}

fn is_irreducible(q: &Matrix) -> bool {
    let m = q.dim();
    let reach = |forward: bool| {
        let mut seen = vec![false; m];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..m {
                let rate = if forward { q.get(i, j) } else { q.get(j, i) };
                if i != j && rate > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

impl ProcessSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProcessSpec::Brownian { mu, .. } => mu.len(),
            ProcessSpec::LevyCp(p) => p.dim(),
            ProcessSpec::Map(m) => m.dim(),
            ProcessSpec::RenewalRisk { premiums, .. } => premiums.len(),
            ProcessSpec::Fixture { name, .. } => match name.as_str() {
                "sine_pair" => 2,
                _ => 1,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessSpec::Brownian { mu, covariance } => {
                if mu.is_empty() || mu.iter().any(|v| !v.is_finite()) {
                    return Err(Error::model("drift must be a nonempty finite vector"));
                }
                check_dim(mu.len(), covariance.dim())?;
                covariance.psd_factor().map(|_| ())
            }
            ProcessSpec::LevyCp(p) => p.validate(),
            ProcessSpec::Map(m) => m.validate(),
            ProcessSpec::RenewalRisk {
                premiums,
                interarrivals,
                claims,
            } => {
                let n = premiums.len();
                if n == 0 {
                    return Err(Error::model("premium vector is empty"));
                }
                if premiums.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
                    return Err(Error::model("premiums must be positive"));
                }
                check_dim(n, interarrivals.len())?;
                check_dim(n, claims.len())?;
                for d in interarrivals.iter().chain(claims) {
                    d.validate()?;
                    if !d.is_positive() {
                        return Err(Error::model("interarrival and claim laws must be strictly positive"));
                    }
                }
                Ok(())
            }
            ProcessSpec::Fixture { name, params } => super::fixtures::validate(name, params),
        }
    }

    /// Mean drift `lim X(t)/t`, when the process has one.
    pub fn mean_drift(&self) -> Result<Option<Vec<f64>>> {
        self.validate()?;
        Ok(match self {
            ProcessSpec::Brownian { mu, .. } => Some(mu.clone()),
            ProcessSpec::LevyCp(p) => Some(p.mean_drift()),
            ProcessSpec::Map(m) => Some(m.mean_drift()?),
            ProcessSpec::RenewalRisk { premiums, .. } => {
                let critical = super::critical_premium(self)?;
                Some(premiums.iter().zip(critical).map(|(c, k)| c - k).collect())
            }
            ProcessSpec::Fixture { .. } => None,
        })
    }
}
