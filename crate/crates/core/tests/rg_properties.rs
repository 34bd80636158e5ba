use hfm::rg::{
    analytic_fixed_point, coarse_step, fine_step, fixed_point_alpha, iterate_to_fixed_point, solve_alpha, solve_q,
    Direction, RgConfig, TransitionMatrix,
};
use hfm::{DenseDistribution, HfmParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dist(n: usize, seed: u64) -> DenseDistribution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (0..1usize << n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    DenseDistribution::from_weights(n, w).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coarse_step_is_linear(n in 1usize..8, s1 in any::<u64>(), s2 in any::<u64>(), lambda in 0.0f64..=1.0, alpha in 0.0f64..=1.0) {
        let p = random_dist(n, s1);
        let r = random_dist(n, s2);
        let lhs = coarse_step(&p.mix(&r, lambda).unwrap(), alpha).unwrap();
        let rhs = coarse_step(&p, alpha).unwrap().mix(&coarse_step(&r, alpha).unwrap(), lambda).unwrap();
        prop_assert!(max_abs_diff(lhs.probs(), rhs.probs()) < 1e-12);
    }

    #[test]
    fn coarse_step_equals_matrix_product(n in 1usize..9, seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let p = random_dist(n, seed);
        let t = TransitionMatrix::new(n, alpha).unwrap();
        let stepped = coarse_step(&p, alpha).unwrap();
        prop_assert!(max_abs_diff(stepped.probs(), &t.apply(p.probs())) < 1e-12);
    }

    #[test]
    fn solved_alpha_preserves_entropy(n in 2usize..9, seed in any::<u64>()) {
        let p = random_dist(n, seed);
        let h = p.entropy_bits();
        prop_assume!(h > 1.0);
        let alpha = solve_alpha(&p, h).unwrap();
        let next = coarse_step(&p, alpha).unwrap();
        prop_assert!((next.entropy_bits() - h).abs() < 1e-8);
    }

    #[test]
    fn stationary_vector_is_unique(n in 1usize..8, s1 in any::<u64>(), s2 in any::<u64>(), alpha in 0.05f64..0.95) {
        let t = TransitionMatrix::new(n, alpha).unwrap();
        let (a, _) = t.stationary_from(random_dist(n, s1).probs(), 1e-15, 100_000);
        let (b, _) = t.stationary_from(random_dist(n, s2).probs(), 1e-15, 100_000);
        prop_assert!(hfm::info::total_variation(&a, &b) < 1e-9);
    }
}

#[test]
fn stationary_vector_is_the_analytic_fixed_point() {
    for n in 1..=10 {
        for g in [0.75, 0.8, 1.0, 1.5, 3.0] {
            let t = TransitionMatrix::new(n, fixed_point_alpha(g)).unwrap();
            let stationary = t.stationary(1e-15, 100_000);
            let pstar = analytic_fixed_point(n, g).unwrap();
            let d = stationary.total_variation(&pstar).unwrap();
            assert!(d < 1e-9, "n={n} g={g} tv={d}");
        }
    }
}

#[test]
fn direct_solve_agrees_with_power_iteration_and_the_fixed_point() {
    for n in [1, 4, 9] {
        for g in [0.8, 1.5, 3.0] {
            let t = TransitionMatrix::new(n, fixed_point_alpha(g)).unwrap();
            let direct = t.stationary_direct().unwrap();
            let pstar = analytic_fixed_point(n, g).unwrap();
            let worst = direct.probs().iter().zip(pstar.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-12, "n={n} g={g} max diff {worst}");
        }
    }
    let t = TransitionMatrix::new(6, 0.3).unwrap();
    let power = t.stationary(1e-15, 100_000);
    assert!(t.stationary_direct().unwrap().total_variation(&power).unwrap() < 1e-12);
    assert!(TransitionMatrix::new(12, 0.5).unwrap().stationary_direct().is_err());
}

#[test]
fn fixed_point_is_the_prefix_of_a_wide_hfm() {
    for g in [0.8, 1.0, 1.5] {
        let wide = HfmParams::new(1000, g).unwrap();
        let pstar = analytic_fixed_point(5, g).unwrap();
        let prefix = wide.marginal_high(5).unwrap();
        assert!(pstar.total_variation(&prefix).unwrap() < 1e-12);
    }
}

#[test]
fn coarse_iteration_from_random_start() {
    let pstar = analytic_fixed_point(6, 1.0).unwrap();
    let config = RgConfig {
        target_entropy: Some(pstar.entropy_bits()),
        ..RgConfig::default()
    };
    let (limit, diag) = iterate_to_fixed_point(&random_dist(6, 3), &config, Direction::Coarse).unwrap();
    assert!(diag.converged);
    assert!(limit.total_variation(&pstar).unwrap() < 1e-6);
    let alpha = *diag.alpha_trace.last().unwrap();
    assert!((alpha - fixed_point_alpha(1.0)).abs() < 1e-6);
}

#[test]
fn fine_step_with_matched_q_keeps_the_hfm() {
    for n in 3..=10 {
        for g in [0.8, 1.5] {
            let h = HfmParams::new(n, g).unwrap().dense().unwrap();
            let q = solve_q(&h, h.entropy_bits()).unwrap();
            let next = fine_step(&h, q).unwrap();
            assert!(next.total_variation(&h).unwrap() < 1e-9, "n={n} g={g}");
        }
    }
}

// With q pinned to the HFM value p(s_n = 1) the fine map forgets its start.
#[test]
fn fine_iteration_with_fixed_q_reaches_the_hfm() {
    for n in [3, 6, 9] {
        for g in [0.8, 1.5] {
            let params = HfmParams::new(n, g).unwrap();
            let h = params.dense().unwrap();
            let q = params.level_mass(n);
            let mut p = random_dist(n, n as u64);
            for _ in 0..2000 {
                p = fine_step(&p, q).unwrap();
            }
            let d = p.total_variation(&h).unwrap();
            assert!(d < 1e-6, "n={n} g={g} tv={d}");
        }
    }
}

// The entropy-matched fine map has the HFM as an unstable fixed point: a tiny
// perturbation is amplified rather than damped.
#[test]
fn entropy_matched_fine_map_repels_perturbations() {
    let n = 5;
    let h = HfmParams::new(n, 0.8).unwrap().dense().unwrap();
    let target = h.entropy_bits();
    let noise = random_dist(n, 9);
    let mut p = h.mix(&noise, 1.0 - 1e-7).unwrap();
    let start = p.total_variation(&h).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let Ok(q) = solve_q(&p, target) else { break };
        p = fine_step(&p, q).unwrap();
        worst = worst.max(p.total_variation(&h).unwrap());
    }
    assert!(worst > 1e3 * start, "start {start} worst {worst}");
}
