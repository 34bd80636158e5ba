mod common;

use common::random_dbn;
use hfm_dbn::exact::{all_states, down_matrix, row_index};
use hfm_dbn::observable::{estimate_phi, martingale_pairs, propagate_observable, regress, ObservableSpec};
use hfm_dbn::rbm::sigmoid;
use hfm_dbn::{Dbn, Rbm};
use ndarray::{array, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy() -> Dbn {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    random_dbn(&[9, 5, 4, 3], 1.2, &mut rng)
}

fn pixel_spec() -> ObservableSpec {
    ObservableSpec::left_minus_right(3)
}

#[test]
fn constant_observable_stays_constant() {
    let dbn = toy();
    let spec = ObservableSpec::constant(9, 0.37);
    let data = Array2::from_shape_fn((20, 9), |(i, j)| ((i + j) % 2) as f64);
    for l in 1..=3 {
        for p in propagate_observable(&dbn, &spec, l, data.view(), 10, 1).unwrap() {
            assert!((p.phi.value - 0.37).abs() < 1e-12);
        }
    }
}

#[test]
fn independent_layers_give_the_visible_mean() {
    let mut bottom = Rbm::zeros(4, 3);
    bottom.visible_bias = array![1.0, -1.0, 0.5, 0.0];
    let mut top = Rbm::zeros(3, 2);
    top.hidden_bias = array![2.0, -2.0];
    let dbn = Dbn::new(vec![bottom, top]).unwrap();
    let spec = ObservableSpec {
        name: "mixed".into(),
        weights: vec![0.5, -0.25, 1.0, 0.1],
        offset: 0.2,
    };
    let expected = 0.2 + 0.5 * sigmoid(1.0) - 0.25 * sigmoid(-1.0) + sigmoid(0.5) + 0.1 * 0.5;
    let data = Array2::from_shape_fn((10, 4), |(i, j)| ((i >> j) & 1) as f64);
    for p in propagate_observable(&dbn, &spec, 1, data.view(), 1, 0).unwrap() {
        assert!((p.phi.value - expected).abs() < 1e-12);
    }
    // layer 2 averages an exactly constant phi_1
    for p in propagate_observable(&dbn, &spec, 2, data.view(), 5, 0).unwrap() {
        assert!((p.phi.value - expected).abs() < 1e-12);
    }
}

#[test]
fn monte_carlo_phi_matches_enumeration() {
    let dbn = toy();
    let spec = pixel_spec();
    // exact phi_2 over all layer-2 states: sum_{s1} p(s1 | s2) phi_1(s1)
    let s1 = all_states(5);
    let phi1 = spec.layer_one(&dbn, s1.view()).unwrap();
    let down = down_matrix(dbn.rbm(2).unwrap()).unwrap();
    let exact = down.dot(&phi1);
    let s2 = all_states(4);
    let rollouts = 4000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let est = estimate_phi(&dbn, &spec, 2, s2.view(), rollouts, &mut rng).unwrap();
    for (i, e) in est.iter().enumerate() {
        let idx = row_index(s2.row(i));
        assert!(
            (e.value - exact[idx]).abs() < 5.0 * e.stderr.max(1e-9),
            "state {idx}: {} vs {} (se {})",
            e.value,
            exact[idx],
            e.stderr
        );
    }
}

#[test]
fn phi_is_a_martingale_on_a_toy_model() {
    // stronger couplings so that deep phi values spread well beyond the MC noise
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let dbn = random_dbn(&[9, 5, 4, 3], 2.5, &mut rng);
    let spec = pixel_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = common::draw_rows(&ndarray::Array1::from_elem(512, 1.0 / 512.0), 9, 20_000, &mut rng);
    for l in 2..=3 {
        let pairs = martingale_pairs(&dbn, &spec, l, data.view(), 400, l as u64).unwrap();
        let r = regress(&pairs.upper, &pairs.lower, pairs.upper_noise_var).unwrap();
        assert!(r.reliability > 0.8, "layer {l}: {r:?}");
        assert!(r.ci95.0 <= 1.0 && 1.0 <= r.ci95.1, "layer {l}: {r:?}");
        assert!((0.9..=1.1).contains(&r.slope), "layer {l}: {r:?}");
    }
    assert!(martingale_pairs(&dbn, &spec, 1, data.view(), 10, 0).is_err());
}

#[test]
fn mismatched_observable_is_rejected() {
    let dbn = toy();
    let data = Array2::zeros((3, 9));
    let spec = ObservableSpec::constant(4, 1.0);
    assert!(propagate_observable(&dbn, &spec, 1, data.view(), 1, 0).is_err());
}
