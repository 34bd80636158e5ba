use hfm::analysis::{
    analyze_sample, fit_g, gauge_fix, hfm_kl_bits, kendall_distance, kendall_tau_b, kl_prefix_curve,
    optimize_permutation, peak_decompose, per_peak_report, GStrategy, GaugePerm, PeakNode,
};
use hfm::{EmpiricalSample, FeatureState, HfmParams};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn brute_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut s, mut tx, mut ty, mut pairs) = (0i64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            pairs += 1;
            let dx = (x[i] - x[j]).signum() * (x[i] != x[j]) as i64 as f64;
            let dy = (y[i] - y[j]).signum() * (y[i] != y[j]) as i64 as f64;
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            s += (dx * dy) as i64;
        }
    }
    let denom = (((pairs - tx) * (pairs - ty)) as f64).sqrt();
    (n >= 2 && denom > 0.0).then(|| s as f64 / denom)
}

fn arb_sample(n: usize) -> impl Strategy<Value = EmpiricalSample> {
    prop::collection::vec((0u64..(1 << n), 1u64..20), 1..30).prop_map(move |v| {
        EmpiricalSample::from_counts(n, v.into_iter().map(|(i, c)| (FeatureState::from_index(i, n), c))).unwrap()
    })
}

fn arb_gauge(n: usize) -> impl Strategy<Value = GaugePerm> {
    (prop::collection::vec(any::<bool>(), n), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        .prop_map(|(tau, pi)| GaugePerm::new(tau, pi).unwrap())
}

fn level_cost(sample: &EmpiricalSample) -> u64 {
    sample.iter().map(|(s, c)| c * s.level() as u64).sum()
}

fn check_tree(node: &PeakNode) {
    if node.is_leaf() {
        return;
    }
    assert_eq!(node.children.len(), 2);
    let w: f64 = node.children.iter().map(|c| c.weight).sum();
    assert!((w - node.weight).abs() < 1e-12);
    let merged = node.children[0].members.merged(&node.children[1].members).unwrap();
    assert_eq!(merged, node.members);
    for (s, _) in node.children[0].members.iter() {
        assert_eq!(node.children[1].members.count(s), 0);
    }
    // chain rule for a mixture with disjoint supports
    let fractions: Vec<f64> = node.children.iter().map(|c| c.weight / node.weight).collect();
    let mixing = hfm::info::binary_entropy(fractions[0]);
    let within: f64 = node.children.iter().zip(&fractions).map(|(c, f)| f * c.entropy_bits).sum();
    assert!((node.entropy_bits - mixing - within).abs() < 1e-9);
    node.children.iter().for_each(check_tree);
}

/// Relabels `t` so that applying `GaugePerm::permutation(pi)` gives `t` back.
fn scramble(sample: &EmpiricalSample, pi: &[usize]) -> EmpiricalSample {
    let n = sample.width();
    sample
        .map_states(n, |t| {
            let mut s = FeatureState::zeros(n);
            for (i, &p) in pi.iter().enumerate() {
                s.set(p, t.bit(i));
            }
            s
        })
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kendall_matches_brute_force(v in prop::collection::vec((0u8..6, 0u8..6), 0..60)) {
        let x: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
        match (kendall_tau_b(&x, &y), brute_tau_b(&x, &y)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn gauge_inverse_restores_sample(g in arb_gauge(6), sample in arb_sample(6)) {
        let there = g.apply_sample(&sample).unwrap();
        prop_assert_eq!(g.inverse().apply_sample(&there).unwrap(), sample.clone());
        let flips = GaugePerm::flips(g.tau().to_vec());
        prop_assert_eq!(flips.apply_sample(&flips.apply_sample(&sample).unwrap()).unwrap(), sample);
    }

    #[test]
    fn kl_is_invariant_under_joint_relabelling(g in arb_gauge(5), sample in arb_sample(5), coupling in 0.3f64..3.0) {
        let model = HfmParams::new(5, coupling).unwrap().dense().unwrap();
        let kl = |s: &EmpiricalSample, m: &hfm::DenseDistribution| {
            let p = s.to_dense().unwrap();
            p.kl_bits(m).unwrap()
        };
        let before = kl(&sample, &model);
        let after = kl(&g.apply_sample(&sample).unwrap(), &g.apply_dense(&model).unwrap());
        prop_assert!((before - after).abs() < 1e-10);
    }

    #[test]
    fn optimized_permutation_never_loses_to_identity(sample in arb_sample(6), coupling in 0.1f64..4.0) {
        let (_, fixed) = gauge_fix(&sample).unwrap();
        let params = HfmParams::new(6, coupling).unwrap();
        let pi = optimize_permutation(&fixed, coupling).unwrap();
        let best = hfm_kl_bits(&pi.apply_sample(&fixed).unwrap(), &params).unwrap();
        prop_assert!(best <= hfm_kl_bits(&fixed, &params).unwrap() + 1e-12);
    }

    #[test]
    fn exhaustive_search_is_optimal(sample in arb_sample(4)) {
        let pi = optimize_permutation(&sample, 1.0).unwrap();
        let best = level_cost(&pi.apply_sample(&sample).unwrap());
        let mut perm: Vec<usize> = (0..4).collect();
        let mut all = Vec::new();
        permute(&mut perm, 0, &mut all);
        for p in all {
            let g = GaugePerm::permutation(p).unwrap();
            prop_assert!(best <= level_cost(&g.apply_sample(&sample).unwrap()));
        }
    }

    #[test]
    fn peak_tree_partitions_the_sample(sample in arb_sample(7), threshold in 0.0f64..4.0) {
        let tree = peak_decompose(&sample, Some(threshold)).unwrap();
        check_tree(&tree);
        let total: f64 = tree.leaves().iter().map(|(_, l)| l.weight).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert_eq!(peak_decompose(&sample, Some(threshold)).unwrap(), tree);
    }
}

fn permute(v: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == v.len() {
        out.push(v.clone());
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, out);
        v.swap(k, i);
    }
}

#[test]
fn kendall_on_exact_hfm_probabilities_is_zero() {
    for n in 2..=12 {
        for g in [0.1, 0.5, 1.0, 3.0] {
            let params = HfmParams::new(n, g).unwrap();
            let (k, m): (Vec<f64>, Vec<f64>) = (0..1u64 << n)
                .map(|i| {
                    let s = FeatureState::from_index(i, n);
                    (params.prob(&s).unwrap(), s.level() as f64)
                })
                .unzip();
            assert_eq!(kendall_tau_b(&k, &m).map(|t| 1.0 + t), Some(0.0), "n={n} g={g}");
        }
    }
}

#[test]
fn kendall_distance_extremes_and_null() {
    let rising = EmpiricalSample::from_counts(3, (0..8u64).map(|i| {
        let s = FeatureState::from_index(i, 3);
        let c = 1 + s.level() as u64;
        (s, c)
    }))
    .unwrap();
    assert_eq!(kendall_distance(&rising).unwrap(), 2.0);
    assert!(kendall_distance(&EmpiricalSample::from_counts(3, [(FeatureState::zeros(3), 4)]).unwrap()).is_err());

    // shuffling counts across states destroys any association
    let n = 8;
    let params = HfmParams::new(n, 0.5).unwrap();
    let mut counts: Vec<u64> = (0..1u64 << n)
        .map(|i| (params.prob(&FeatureState::from_index(i, n)).unwrap() * 1e6).round() as u64 + 1)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mean = 0.0;
    for _ in 0..50 {
        counts.shuffle(&mut rng);
        let sample =
            EmpiricalSample::from_counts(n, counts.iter().enumerate().map(|(i, &c)| (FeatureState::from_index(i as u64, n), c)))
                .unwrap();
        mean += kendall_distance(&sample).unwrap() / 50.0;
    }
    assert!((mean - 1.0).abs() < 0.05, "{mean}");
}

#[test]
fn planted_permutation_is_recovered() {
    let t = HfmParams::new(6, 1.0).unwrap().sample(100_000, 11);
    let pi0 = vec![3, 0, 5, 1, 4, 2];
    let scrambled = scramble(&t, &pi0);
    let (gauge, fixed) = gauge_fix(&scrambled).unwrap();
    assert!(gauge.is_identity());
    let found = optimize_permutation(&fixed, 1.0).unwrap();
    assert_eq!(found.pi(), &pi0[..]);
    assert_eq!(found.apply_sample(&scrambled).unwrap(), t);
}

#[test]
fn hill_climbing_recovers_a_wide_permutation() {
    let n = 12;
    let t = HfmParams::new(n, 0.75).unwrap().sample(100_000, 12);
    let mut pi0: Vec<usize> = (0..n).collect();
    pi0.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let scrambled = scramble(&t, &pi0);
    let found = optimize_permutation(&scrambled, 0.75).unwrap();
    assert!(level_cost(&found.apply_sample(&scrambled).unwrap()) <= level_cost(&t));
    // the well-sampled coarse features must land exactly
    assert_eq!(&found.pi()[..6], &pi0[..6]);
}

#[test]
fn hfm_ordered_sample_keeps_identity() {
    let t = HfmParams::new(5, 1.2).unwrap().sample(50_000, 3);
    assert!(optimize_permutation(&t, 1.2).unwrap().is_identity());
}

#[test]
fn fit_g_is_consistent() {
    let t = HfmParams::new(10, 1.0).unwrap().sample(1_000_000, 8);
    let fit = fit_g(&t).unwrap();
    assert!(!fit.degenerate);
    assert!((fit.g - 1.0).abs() < 0.02, "{}", fit.g);
}

#[test]
fn kl_curve_of_exact_and_sampled_hfm() {
    // at g = ln 2 the counts 2^(6 - m) are exactly proportional to h_6
    let params = HfmParams::new(6, 2f64.ln()).unwrap();
    let exact = EmpiricalSample::from_counts(
        6,
        (0..64u64).map(|i| {
            let s = FeatureState::from_index(i, 6);
            (s.clone(), 1u64 << (6 - s.level()))
        }),
    )
    .unwrap();
    for (_, kl) in kl_prefix_curve(&exact, &params, 6).unwrap() {
        assert!(kl.abs() < 1e-12);
    }
    assert!(kl_prefix_curve(&exact, &params, 1).is_err());

    let n = 8;
    let count = 100_000;
    let params = HfmParams::new(n, 1.0).unwrap();
    let t = params.sample(count, 21);
    for (k, kl) in kl_prefix_curve(&t, &params, n).unwrap() {
        let floor = ((1u64 << k) - 1) as f64 / (2.0 * count as f64 * std::f64::consts::LN_2);
        assert!(kl < 4.0 * floor, "k={k} kl={kl} floor={floor}");
    }
}

fn complement_mixture(n: usize, g: f64, each: usize, seed: u64) -> (EmpiricalSample, EmpiricalSample) {
    let params = HfmParams::new(n, g).unwrap();
    let a = params.sample(each, seed);
    let b = params.sample(each, seed + 1).map_states(n, FeatureState::complement).unwrap();
    (a, b)
}

#[test]
fn single_hfm_is_one_peak() {
    let t = HfmParams::new(9, 1.0).unwrap().sample(100_000, 31);
    let tree = peak_decompose(&t, Some(3.0)).unwrap();
    assert!(tree.is_leaf(), "{} leaves", tree.leaves().len());
}

#[test]
fn planted_complement_mixture_splits_in_two() {
    // at g = 1 about 3% of each component sits at levels m >= 7, where the
    // two components overlap in Hamming space and 99% attribution is impossible
    let (a, b) = complement_mixture(9, 1.5, 50_000, 41);
    let mixture = a.merged(&b).unwrap();
    let tree = peak_decompose(&mixture, None).unwrap();
    let leaves = tree.leaves();
    assert_eq!(leaves.len(), 2);
    // attribution: how much of each leaf comes from the component its apex belongs to
    let mut correct = 0u64;
    for (_, leaf) in &leaves {
        let from_a: u64 = leaf.members.iter().map(|(s, _)| a.count(s)).sum();
        let from_b: u64 = leaf.members.iter().map(|(s, _)| b.count(s)).sum();
        correct += if a.count(&leaf.apex) >= b.count(&leaf.apex) { from_a } else { from_b };
    }
    assert!(correct as f64 >= 0.99 * mixture.total() as f64);

    let whole = analyze_sample(&mixture, GStrategy::Fit).unwrap().0;
    let report = per_peak_report(&tree, GStrategy::Fit).unwrap();
    assert!(report.weighted_kl < whole.kl_full);
    let w: f64 = report.leaves.iter().map(|l| l.weight).sum();
    assert!((w - 1.0).abs() < 1e-12);
}

#[test]
fn identical_components_stay_one_peak() {
    let params = HfmParams::new(9, 1.0).unwrap();
    let twice = params.sample(50_000, 5).merged(&params.sample(50_000, 5)).unwrap();
    assert!(peak_decompose(&twice, None).unwrap().is_leaf());
}

#[test]
fn single_leaf_report_matches_whole_sample() {
    let t = HfmParams::new(6, 1.0).unwrap().sample(20_000, 2);
    let tree = peak_decompose(&t, None).unwrap();
    assert!(tree.is_leaf());
    let report = per_peak_report(&tree, GStrategy::Fit).unwrap();
    let (whole, _) = analyze_sample(&t, GStrategy::Fit).unwrap();
    assert_eq!(report.leaves[0].fit, whole);
    assert!(!report.leaves[0].low_statistics);
    assert_eq!(report.weighted_kl, whole.kl_full);
}

