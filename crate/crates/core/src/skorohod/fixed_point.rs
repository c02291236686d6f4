use crate::error::{check_dim, Error, Result};
use crate::mmatrix::RoutingMatrix;

use super::{ReflectionSolution, VectorPath};

/// Reflection by global Picard iteration on the regulator equations
/// `L_k(t) = max(0, -min_{s≤t} (X_k(s) - Σ_j p_jk L_j(s)))`, started from
/// `L = 0`.
///
/// The iterates increase monotonically to the solution; iteration stops
/// once the sup-norm change over the whole path is at most `tol`.
pub fn reflect_fixed_point(
    x: &VectorPath,
    routing: &RoutingMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<ReflectionSolution> {
    check_dim(routing.dim(), x.dim())?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::input(format!("tolerance must be positive, got {tol}")));
    }
    let n = x.dim();
    let len = x.len();
    let p = routing.p();
    let xs = x.values();
    let mut l = vec![0.0; xs.len()];
    let mut next = vec![0.0; xs.len()];
    let mut level = vec![0.0_f64; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        level.iter_mut().for_each(|v| *v = 0.0);
        let mut change: f64 = 0.0;
        for k in 0..len {
            let row = k * n;
            for i in 0..n {
                let mut z = xs[row + i];
                for j in 0..n {
                    z -= p.get(j, i) * l[row + j];
                }
                level[i] = level[i].max(-z);
                next[row + i] = level[i];
                change = change.max((level[i] - l[row + i]).abs());
            }
        }
        std::mem::swap(&mut l, &mut next);
        if change <= tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Convergence {
                iterations,
                context: "fixed-point regulator iteration".into(),
            });
        }
    }

    let mut w = vec![0.0; xs.len()];
    let mut rl = vec![0.0; n];
    let mut residual: f64 = 0.0;
    for k in 0..len {
        let row = k * n;
        routing.apply_reflection_into(&l[row..row + n], &mut rl);
        for i in 0..n {
            let v = xs[row + i] + rl[i];
            w[row + i] = if v < 0.0 && v >= -tol {
                residual = residual.max(-v);
                0.0
            } else {
                v
            };
        }
    }
    Ok(ReflectionSolution {
        w: VectorPath::new(x.grid().clone(), n, w)?,
        l: VectorPath::new(x.grid().clone(), n, l)?,
        residual,
        freezing: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skorohod::{reflect, TimeGrid, DEFAULT_TOL};

    #[test]
    fn zero_routing_is_running_negative_part() {
        let grid = TimeGrid::uniform(4.0, 0.1).unwrap();
        let x = VectorPath::from_fn(grid, 2, |t, x| {
            x[0] = (2.0 * t).sin() - 0.3 * t;
            x[1] = -t * t + 1.0;
        })
        .unwrap();
        let sol = reflect_fixed_point(&x, &RoutingMatrix::zero(2), 1e-12, 3).unwrap();
        let mut level = [0.0_f64; 2];
        for k in 0..x.len() {
            for i in 0..2 {
                level[i] = level[i].max(-x.point(k)[i]);
                assert_eq!(sol.l.point(k)[i], level[i]);
            }
        }
    }

    #[test]
    fn ramp_matches_step_solver() {
        let grid = TimeGrid::uniform(3.0, 0.01).unwrap();
        for a in [0.5, 2.0] {
            let x = VectorPath::from_fn(grid.clone(), 1, |t, x| x[0] = a - t.min(1.0)).unwrap();
            let step = reflect(&x, &RoutingMatrix::zero(1), DEFAULT_TOL).unwrap();
            let fp = reflect_fixed_point(&x, &RoutingMatrix::zero(1), 1e-12, 100).unwrap();
            assert!(step.w.sup_distance(&fp.w).unwrap() <= 1e-9);
            assert!(step.l.sup_distance(&fp.l).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn sine_pair_second_regulator_catches_up() {
        let routing = RoutingMatrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        let horizon = 4.0 * std::f64::consts::PI;
        let grid = TimeGrid::uniform(horizon, 1e-3).unwrap();
        let x = VectorPath::from_fn(grid, 2, |t, x| {
            x[0] = -t * t.sin().abs();
            x[1] = t * t.sin().abs();
        })
        .unwrap();
        let sol = reflect_fixed_point(&x, &routing, 1e-12, 100).unwrap();
        let l = sol.l.value_at(horizon).unwrap();
        assert!(l[1] >= l[0] - 1e-6 && l[1] > 0.0);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let routing = RoutingMatrix::from_rows(&[&[0.0, 0.9], &[0.9, 0.0]]).unwrap();
        let grid = TimeGrid::uniform(1.0, 0.1).unwrap();
        let x = VectorPath::from_fn(grid, 2, |t, x| x.iter_mut().for_each(|v| *v = -t)).unwrap();
        assert!(matches!(
            reflect_fixed_point(&x, &routing, 1e-14, 3),
            Err(Error::Convergence { .. })
        ));
    }
}
