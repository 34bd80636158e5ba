mod common;

use common::random_rbm;
use hfm_dbn::rbm::sigmoid;
use hfm_dbn::tap::{complement_biases, tap_count_solutions, tap_inits, tap_residual, tap_solve, TapConfig, TapState};
use hfm_dbn::Rbm;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ferromagnet(width: usize, w: f64) -> Rbm {
    // biases chosen so that the model is symmetric under x, s -> 1 - x, 1 - s
    let bias = -w * width as f64 / 2.0;
    Rbm::new(
        Array2::from_elem((width, width), w),
        Array1::from_elem(width, bias),
        Array1::from_elem(width, bias),
    )
    .unwrap()
}

fn tight() -> TapConfig {
    TapConfig {
        tolerance: 1e-10,
        max_iterations: 10_000,
        ..TapConfig::default()
    }
}

#[test]
fn zero_weights_converge_in_one_undamped_step() {
    let mut rbm = Rbm::zeros(3, 2);
    rbm.visible_bias = Array1::from(vec![0.3, -1.0, 2.0]);
    rbm.hidden_bias = Array1::from(vec![-0.5, 0.7]);
    let config = TapConfig {
        damping: 1.0,
        ..TapConfig::default()
    };
    let init = TapState::new(Array1::from_elem(3, 0.5), Array1::from_elem(2, 0.5));
    let sol = tap_solve(&rbm, &init, &config).unwrap();
    assert!(sol.converged);
    assert_eq!(sol.iterations, 1);
    for (m, c) in sol.m_x.iter().zip(&rbm.visible_bias) {
        assert!((m - sigmoid(*c)).abs() < 1e-15);
    }
    for (m, b) in sol.m_s.iter().zip(&rbm.hidden_bias) {
        assert!((m - sigmoid(*b)).abs() < 1e-15);
    }
}

#[test]
fn zero_weights_have_a_single_solution() {
    let rbm = Rbm::zeros(4, 3);
    let visible = Array2::from_shape_fn((16, 4), |(i, j)| ((i >> j) & 1) as f64);
    let inits = tap_inits(&rbm, visible.view()).unwrap();
    let count = tap_count_solutions(&rbm, &inits, 0.01, &TapConfig::default()).unwrap();
    assert_eq!(count.distinct, 1);
    assert_eq!(count.converged_runs, 16);
}

#[test]
fn complement_biases_reflect_solutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let rbm = random_rbm(5, 4, 1.0, &mut rng);
        let init = TapState::new(
            Array1::from_shape_simple_fn(5, || rng.random_range(0.05..0.95)),
            Array1::from_shape_simple_fn(4, || rng.random_range(0.05..0.95)),
        );
        let sol = tap_solve(&rbm, &init, &tight()).unwrap();
        assert!(sol.converged);
        let flipped = complement_biases(&rbm);
        let mirrored = TapState::new(init.m_x.mapv(|m| 1.0 - m), init.m_s.mapv(|m| 1.0 - m));
        let sol2 = tap_solve(&flipped, &mirrored, &tight()).unwrap();
        assert!(sol2.converged);
        let reflected = TapState::new(sol.m_x.mapv(|m| 1.0 - m), sol.m_s.mapv(|m| 1.0 - m));
        assert!(reflected.distance(&sol2) < 1e-8);
    }
}

#[test]
fn bias_sign_flip_is_the_symmetry_only_without_couplings() {
    let mut rbm = Rbm::zeros(2, 2);
    rbm.visible_bias = Array1::from(vec![0.4, -1.1]);
    rbm.hidden_bias = Array1::from(vec![1.3, 0.2]);
    let flipped = complement_biases(&rbm);
    assert_eq!(flipped.visible_bias, -&rbm.visible_bias);
    assert_eq!(flipped.hidden_bias, -&rbm.hidden_bias);
}

#[test]
fn ferromagnet_has_two_symmetric_solutions() {
    let rbm = ferromagnet(4, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut inits = Vec::new();
    for _ in 0..20 {
        let lo = TapState::new(
            Array1::from_shape_simple_fn(4, || rng.random_range(0.01..0.3)),
            Array1::from_shape_simple_fn(4, || rng.random_range(0.01..0.3)),
        );
        let hi = TapState::new(lo.m_x.mapv(|m| 1.0 - m), lo.m_s.mapv(|m| 1.0 - m));
        inits.push(lo);
        inits.push(hi);
    }
    let count = tap_count_solutions(&rbm, &inits, 0.01, &tight()).unwrap();
    assert_eq!(count.distinct, 2, "{count:?}");
    for s in &count.solutions {
        assert!(tap_residual(&rbm, s) < 1e-8);
    }
    let (a, b) = (&count.solutions[0], &count.solutions[1]);
    let mirrored = TapState::new(a.m_x.mapv(|m| 1.0 - m), a.m_s.mapv(|m| 1.0 - m));
    assert!(mirrored.distance(b) < 1e-6);
    let merged = tap_count_solutions(&rbm, &inits, 2.0, &tight()).unwrap();
    assert_eq!(merged.distinct, 1);
}

#[test]
fn unconverged_runs_are_reported() {
    let rbm = ferromagnet(4, 2.0);
    let config = TapConfig {
        max_iterations: 1,
        ..TapConfig::default()
    };
    let init = TapState::new(Array1::from_elem(4, 0.2), Array1::from_elem(4, 0.3));
    let count = tap_count_solutions(&rbm, &[init], 0.01, &config).unwrap();
    assert_eq!((count.distinct, count.unconverged_runs), (0, 1));
}

#[test]
fn invalid_inputs_are_rejected() {
    let rbm = Rbm::zeros(2, 2);
    let ok = TapState::new(Array1::from_elem(2, 0.5), Array1::from_elem(2, 0.5));
    assert!(tap_solve(&rbm, &ok, &TapConfig { damping: 0.0, ..TapConfig::default() }).is_err());
    let edge = TapState::new(Array1::from_elem(2, 1.0), Array1::from_elem(2, 0.5));
    assert!(tap_solve(&rbm, &edge, &TapConfig::default()).is_err());
    let wide = TapState::new(Array1::from_elem(3, 0.5), Array1::from_elem(2, 0.5));
    assert!(tap_solve(&rbm, &wide, &TapConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converged_solutions_satisfy_the_equations(seed in 0u64..1000, damping in 0.2f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rbm = random_rbm(4, 3, 0.7, &mut rng);
        let config = TapConfig { damping, ..TapConfig::default() };
        let init = TapState::new(Array1::from_elem(4, 0.5), Array1::from_elem(3, 0.5));
        let sol = tap_solve(&rbm, &init, &config).unwrap();
        prop_assert!(sol.m_x.iter().chain(&sol.m_s).all(|&m| m > 0.0 && m < 1.0));
        if sol.converged {
            prop_assert!(tap_residual(&rbm, &sol) < config.tolerance);
        }
    }
}
