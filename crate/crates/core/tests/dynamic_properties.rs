mod common;

use orthant::analysis::Verdict;
use orthant::dynamic::{
    coupling_experiment, envelope_divergence, reflect_dynamic, validate_assumptions, CoefficientCatalog, Envelope,
};
use orthant::processes::{generate, ProcessSpec};
use orthant::skorohod::{TimeGrid, DEFAULT_TOL};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn comparison_on_validated_coefficients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=4);
        let matrix = common::random_p(&mut rng, n, 0.9, true);
        let catalog = CoefficientCatalog::StateDamped {
            drift: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            damping: rng.random_range(0.0..2.0),
            matrix,
        };
        let coeffs = catalog.build().unwrap();
        prop_assert!(validate_assumptions(&coeffs, 128, seed).passed());
        let grid = common::random_grid(&mut rng, 500);
        let x = common::random_path(&mut rng, grid, n);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let base = reflect_dynamic(&x, &coeffs, &vec![0.0; n], DEFAULT_TOL).unwrap();
        let moved = reflect_dynamic(&x, &coeffs, &a, DEFAULT_TOL).unwrap();
        for k in 0..x.len() {
            for i in 0..n {
                prop_assert!(moved.w.point(k)[i] >= base.w.point(k)[i] - TOL);
                prop_assert!(moved.l.point(k)[i] <= base.l.point(k)[i] + TOL);
                if k > 0 {
                    let da = moved.l.point(k)[i] - moved.l.point(k - 1)[i];
                    let d0 = base.l.point(k)[i] - base.l.point(k - 1)[i];
                    prop_assert!(da <= d0 + TOL);
                }
            }
        }
    }
}

#[test]
fn feedforward_coupling_is_finite_and_regulators_agree_afterwards() {
    let catalog: CoefficientCatalog = serde_json::from_str(
        r#"{"catalog":"feedforward-constant","drift":[-0.5,-0.2],
            "matrix":{"n":2,"entries":[0,0.8,0,0]}}"#,
    )
    .unwrap();
    let coeffs = catalog.build().unwrap().with_l_independent(true);
    let spec: ProcessSpec =
        serde_json::from_str(r#"{"kind":"brownian","mu":[0,0],"covariance":{"n":2,"entries":[1,0,0,1]}}"#).unwrap();
    let grid = TimeGrid::uniform(400.0, 0.01).unwrap();
    let a = [2.0, 3.0];
    let seeds: Vec<u64> = (0..20).collect();
    let env = Envelope::constant(vec![-0.5, -0.2]);
    for &seed in &seeds {
        let x = generate(&spec, &grid, seed).unwrap();
        let verdicts = envelope_divergence(&x, &env, 10.0).unwrap();
        assert!(verdicts.iter().all(|v| v.verdict == Verdict::Satisfied), "seed {seed}");
    }
    let experiment = coupling_experiment(&spec, &coeffs, &a, &grid, &seeds, DEFAULT_TOL, 1e-6).unwrap();
    assert_eq!(experiment.coupled_fraction, 1.0);
    for (seed, result) in seeds.iter().zip(&experiment.results) {
        let x = generate(&spec, &grid, *seed).unwrap();
        let base = reflect_dynamic(&x, &coeffs, &[0.0, 0.0], DEFAULT_TOL).unwrap();
        let moved = reflect_dynamic(&x, &coeffs, &a, DEFAULT_TOL).unwrap();
        let from = result.index.unwrap();
        for k in from + 1..x.len() {
            for i in 0..2 {
                let da = moved.l.point(k)[i] - moved.l.point(k - 1)[i];
                let d0 = base.l.point(k)[i] - base.l.point(k - 1)[i];
                assert!((da - d0).abs() <= 1e-6, "seed {seed} index {k}");
            }
        }
    }
}

#[test]
fn coupling_requires_declared_structure() {
    let catalog: CoefficientCatalog = serde_json::from_str(
        r#"{"catalog":"state-damped","drift":[-1,-1],"damping":0.5,"matrix":{"n":2,"entries":[0,0.5,0,0]}}"#,
    )
    .unwrap();
    let coeffs = catalog.build().unwrap();
    let spec: ProcessSpec =
        serde_json::from_str(r#"{"kind":"brownian","mu":[0,0],"covariance":{"n":2,"entries":[1,0,0,1]}}"#).unwrap();
    let grid = TimeGrid::uniform(10.0, 0.1).unwrap();
    assert!(coupling_experiment(&spec, &coeffs, &[1.0, 1.0], &grid, &[0], DEFAULT_TOL, 1e-6).is_err());
}
