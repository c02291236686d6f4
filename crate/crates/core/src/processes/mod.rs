//! Seeded input processes and deterministic fixtures.

mod distribution;
mod fixtures;
mod sampler;
mod spec;

use std::collections::BTreeMap;

pub use distribution::Distribution;
pub use fixtures::FIXTURE_NAMES;
pub use sampler::{sampler, PathSampler};
pub use spec::{stationary_distribution, LevyParams, MapSpec, ProcessSpec, TransitionJump};

use crate::error::{Error, Result};
use crate::skorohod::{TimeGrid, VectorPath};

/// Samples `spec` on `grid`. The result is a deterministic function of
/// `(spec, grid, seed)` and starts at `X(0) = 0`.
pub fn generate(spec: &ProcessSpec, grid: &TimeGrid, seed: u64) -> Result<VectorPath> {
    let mut s = sampler(spec, seed)?;
    let n = s.dim();
    let mut values = vec![0.0; grid.len() * n];
    for (k, t) in grid.iter().enumerate() {
        s.sample_at(t, &mut values[k * n..(k + 1) * n])?;
    }
    VectorPath::new(grid.clone(), n, values)
}

/// Premium rates `E(U)/E(A)` at which a renewal risk process has zero drift.
pub fn critical_premium(spec: &ProcessSpec) -> Result<Vec<f64>> {
    let ProcessSpec::RenewalRisk {
        interarrivals, claims, ..
    } = spec
    else {
        return Err(Error::input(
            "critical premium is defined for renewal risk processes only",
        ));
    };
    interarrivals
        .iter()
        .zip(claims)
        .map(|(a, u)| {
            let mean = a.mean();
            if !(mean > 0.0) {
                return Err(Error::model("interarrival law has zero mean"));
            }
            Ok(u.mean() / mean)
        })
        .collect()
}

/// Samples a named deterministic fixture: `ramp` (`X(t) = -min(t, knee)`,
/// `knee` defaulting to 1) or `sine_pair` (`-X₁(t) = X₂(t) = t·|sin t|`).
pub fn fixture(name: &str, params: &BTreeMap<String, f64>, grid: &TimeGrid) -> Result<VectorPath> {
    let spec = ProcessSpec::Fixture {
        name: name.to_string(),
        params: params.clone(),
    };
    generate(&spec, grid, 0)
}
