use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Names accepted by [`super::fixture`].
pub const FIXTURE_NAMES: [&str; 2] = ["ramp", "sine_pair"];

pub(crate) fn validate(name: &str, params: &BTreeMap<String, f64>) -> Result<()> {
    let allowed: &[&str] = match name {
        "ramp" => &["knee"],
        "sine_pair" => &[],
        other => {
            return Err(Error::input(format!(
                "unknown fixture {other:?}; expected one of {FIXTURE_NAMES:?}"
            )))
        }
    };
    for (key, value) in params {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::input(format!("fixture {name} has no parameter {key:?}")));
        }
        if !(value.is_finite() && *value > 0.0) {
            return Err(Error::input(format!("fixture parameter {key} must be positive")));
        }
    }
    Ok(())
}

/// Evaluates a validated fixture at time `t`.
pub(crate) fn evaluate(name: &str, params: &BTreeMap<String, f64>, t: f64, out: &mut [f64]) {
    match name {
        // X(t) = -min(t, knee).
        "ramp" => {
            let knee = params.get("knee").copied().unwrap_or(1.0);
            out[0] = 0.0 - t.min(knee);
        }
        // -X_1(t) = X_2(t) = t·|sin t|.
        "sine_pair" => {
            let v = t * t.sin().abs();
            out[0] = 0.0 - v;
            out[1] = v;
        }
        _ => unreachable!("fixture names are validated"),
    }
}
