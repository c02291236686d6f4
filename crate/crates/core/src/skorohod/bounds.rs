use crate::error::{check_dim, Result};
use crate::mmatrix::RoutingMatrix;

use super::VectorPath;

/// Explicit lower and upper bounds on the regulator.
///
/// `m` is the coordinatewise one-dimensional regulator of `X`, `n` the one of
/// `R⁻¹X`, and `upper = R⁻¹·m`. For the reflection of `X`,
/// `max(m, n) ≤ L ≤ upper` at every grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct RegulatorBounds {
    pub m: VectorPath,
    pub n: VectorPath,
    pub upper: VectorPath,
}

fn running_regulator(x: &VectorPath) -> VectorPath {
    let dim = x.dim();
    let mut level = vec![0.0_f64; dim];
    x.map_points(dim, |p, out| {
        for i in 0..dim {
            level[i] = level[i].max(-p[i]);
            out[i] = level[i];
        }
    })
}

pub fn regulator_bounds(x: &VectorPath, routing: &RoutingMatrix) -> Result<RegulatorBounds> {
    check_dim(routing.dim(), x.dim())?;
    let dim = x.dim();
    let inverse = routing.inverse();
    let m = running_regulator(x);
    let transformed = x.map_points(dim, |p, out| inverse.mul_vec_into(p, out));
    let n = running_regulator(&transformed);
    let upper = m.map_points(dim, |p, out| inverse.mul_vec_into(p, out));
    Ok(RegulatorBounds { m, n, upper })
}
