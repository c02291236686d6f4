use rand::Rng;
use rand_distr::{Distribution as _, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A one-dimensional law for jump sizes, claims and interarrival times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Deterministic { value: f64 },
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Empirical { values: Vec<f64>, probabilities: Vec<f64> },
}

impl Distribution {
    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        match self {
            Distribution::Deterministic { value } if !value.is_finite() => {
                Err(Error::model(format!("deterministic value must be finite, got {value}")))
            }
            Distribution::Exponential { rate } if !(*rate > 0.0 && rate.is_finite()) => {
                Err(Error::model(format!("exponential rate must be positive, got {rate}")))
            }
            Distribution::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                Err(Error::model(format!("uniform bounds need lo < hi, got [{lo}, {hi}]")))
            }
            Distribution::Empirical { values, probabilities } => {
                if values.is_empty() || values.len() != probabilities.len() {
                    return Err(Error::model(
                        "empirical law needs equally many values and probabilities",
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::model("empirical values must be finite"));
                }
                if probabilities.iter().any(|&p| !(p >= 0.0)) {
                    return Err(Error::model("empirical probabilities must be nonnegative"));
                }
                let total: f64 = probabilities.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::model(format!("empirical probabilities sum to {total}, not 1")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Deterministic { value } => *value,
            Distribution::Exponential { rate } => 1.0 / rate,
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            Distribution::Empirical { values, probabilities } => {
                values.iter().zip(probabilities).map(|(v, p)| v * p).sum()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Distribution::Deterministic { .. } => 0.0,
            Distribution::Exponential { rate } => 1.0 / (rate * rate),
            Distribution::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Distribution::Empirical { values, probabilities } => {
                let m = self.mean();
                values
                    .iter()
                    .zip(probabilities)
                    .map(|(v, p)| p * (v - m) * (v - m))
                    .sum()
            }
        }
    }

    /// True when every outcome is strictly positive almost surely.
    pub fn is_positive(&self) -> bool {
        match self {
            Distribution::Deterministic { value } => *value > 0.0,
            Distribution::Exponential { .. } => true,
            Distribution::Uniform { lo, .. } => *lo >= 0.0,
            Distribution::Empirical { values, probabilities } => {
                values.iter().zip(probabilities).all(|(&v, &p)| p == 0.0 || v > 0.0)
            }
        }
    }

    /// True for the point mass at zero.
    pub fn is_zero(&self) -> bool {
        matches!(self, Distribution::Deterministic { value } if *value == 0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Deterministic { value } => *value,
            Distribution::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            Distribution::Uniform { lo, hi } => rng.random_range(*lo..*hi),
            Distribution::Empirical { values, probabilities } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probabilities) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                // Rounding left the cumulative sum just below one.
                let last = probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(values.len() - 1);
                values[last]
            }
        }
    }
}
