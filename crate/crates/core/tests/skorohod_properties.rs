mod common;

use common::{apply, instance, sup_gap};
use orthant::cli::audit_solution;
use orthant::reflect;
use orthant::skorohod::{reflect_fixed_point, regulator_bounds, shift, ReflectionSolution, VectorPath, DEFAULT_TOL};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;
const LEN: usize = 400;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn step_and_picard_agree(seed in any::<u64>()) {
        let inst = instance(seed, LEN);
        let step = reflect(&inst.x, &inst.routing, DEFAULT_TOL).unwrap();
        let picard = reflect_fixed_point(&inst.x, &inst.routing, 1e-12, 1_000_000).unwrap();
        prop_assert!(sup_gap(&step.w, &picard.w) <= 1e-8);
        prop_assert!(sup_gap(&step.l, &picard.l) <= 1e-8);
    }

    #[test]
    fn regulator_is_minimal(seed in any::<u64>()) {
        // Candidates Y = R⁻¹(M + Z) and Y = L + R⁻¹Z with Z ≥ 0 nondecreasing
        // are feasible; their pointwise minimum is kept whenever feasible.
        let inst = instance(seed, LEN);
        let n = inst.x.dim();
        let sol = reflect(&inst.x, &inst.routing, DEFAULT_TOL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut m, mut z1, mut z2) = (vec![0.0_f64; n], vec![0.0_f64; n], vec![0.0_f64; n]);
        let mut prev_min: Option<Vec<f64>> = None;
        let mut min_feasible = true;
        let reflection = inst.routing.reflection();
        for k in 0..inst.x.len() {
            let x = inst.x.point(k);
            for i in 0..n {
                m[i] = m[i].max(-x[i]);
                if rng.random::<f64>() < 0.2 {
                    z1[i] += rng.random_range(0.0..0.5);
                }
                if rng.random::<f64>() < 0.2 {
                    z2[i] += rng.random_range(0.0..0.5);
                }
            }
            let mz: Vec<f64> = m.iter().zip(&z1).map(|(a, b)| a + b).collect();
            let y1 = apply(&inst.rinv, &mz);
            let y2: Vec<f64> = sol.l.point(k).iter().zip(apply(&inst.rinv, &z2)).map(|(a, b)| a + b).collect();
            let y3: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a.min(*b)).collect();
            let l = sol.l.point(k);
            for i in 0..n {
                prop_assert!(l[i] <= y1[i] + TOL);
                prop_assert!(l[i] <= y2[i] + TOL);
            }
            let ry3 = reflection.mul_vec(&y3);
            let nondecreasing = prev_min.as_ref().is_none_or(|p| p.iter().zip(&y3).all(|(a, b)| b >= a));
            min_feasible &= nondecreasing && (0..n).all(|i| x[i] + ry3[i] >= -TOL);
            if min_feasible {
                for i in 0..n {
                    prop_assert!(l[i] <= y3[i] + TOL);
                }
            }
            prev_min = Some(y3);
        }
    }

    #[test]
    fn regulator_sandwich(seed in any::<u64>()) {
        let inst = instance(seed, LEN);
        let sol = reflect(&inst.x, &inst.routing, DEFAULT_TOL).unwrap();
        let b = regulator_bounds(&inst.x, &inst.routing).unwrap();
        for k in 0..inst.x.len() {
            for i in 0..inst.x.dim() {
                let l = sol.l.point(k)[i];
                prop_assert!(b.m.point(k)[i].max(b.n.point(k)[i]) <= l + TOL);
                prop_assert!(l <= b.upper.point(k)[i] + TOL);
            }
        }
    }

    #[test]
    fn initial_condition_comparison(seed in any::<u64>(), scale in 0.0f64..5.0) {
        let inst = instance(seed, LEN);
        let n = inst.x.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let a: Vec<f64> = (0..n).map(|_| scale * rng.random::<f64>()).collect();
        let base = reflect(&inst.x, &inst.routing, DEFAULT_TOL).unwrap();
        let moved = reflect(&shift(&a, &inst.x).unwrap(), &inst.routing, DEFAULT_TOL).unwrap();
        let gap = apply(&inst.rinv, &a);
        let mut prev: Option<Vec<f64>> = None;
        for k in 0..inst.x.len() {
            let (wa, w0) = (moved.w.point(k), base.w.point(k));
            let (la, l0) = (moved.l.point(k), base.l.point(k));
            for i in 0..n {
                prop_assert!(wa[i] >= w0[i] - TOL);
                prop_assert!(la[i] <= l0[i] + TOL);
                prop_assert!(l0[i] <= la[i] + gap[i] + TOL);
            }
            let d: Vec<f64> = wa.iter().zip(w0).map(|(u, v)| u - v).collect();
            let td = apply(&inst.rinv, &d);
            if let Some(p) = &prev {
                for i in 0..n {
                    prop_assert!(td[i] <= p[i] + TOL);
                }
            }
            prev = Some(td);
        }
    }

    #[test]
    fn shift_identity(seed in any::<u64>()) {
        let inst = instance(seed, LEN);
        let n = inst.x.dim();
        let sol = reflect(&inst.x, &inst.routing, DEFAULT_TOL).unwrap();
        let (x0, w0, l0) = (inst.x.point(0).to_vec(), sol.w.point(0).to_vec(), sol.l.point(0).to_vec());
        let restarted = inst.x.map_points(n, |p, out| {
            for i in 0..n {
                out[i] = w0[i] + (p[i] - x0[i]);
            }
        });
        let again = reflect(&restarted, &inst.routing, DEFAULT_TOL).unwrap();
        for k in 0..inst.x.len() {
            for i in 0..n {
                let offset = sol.l.point(k)[i] - l0[i];
                prop_assert!((offset - again.l.point(k)[i]).abs() <= TOL);
            }
        }
    }

    #[test]
    fn solutions_pass_the_audit_and_round_trip(seed in any::<u64>()) {
        let inst = instance(seed, LEN);
        let sol = reflect(&inst.x, &inst.routing, DEFAULT_TOL).unwrap();
        prop_assert!(audit_solution(&sol, &inst.x, &inst.routing, DEFAULT_TOL).unwrap().passed);
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let back = ReflectionSolution::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.w, sol.w);
        prop_assert_eq!(back.l, sol.l);
        let mut buf = Vec::new();
        inst.x.write_csv(&mut buf, "x").unwrap();
        prop_assert_eq!(VectorPath::read_csv(buf.as_slice()).unwrap(), inst.x);
    }
}
