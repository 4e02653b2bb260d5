use indefinite_core::abstraction::{
    abstraction_equivalent, distribution_check, fig7_pair, ks_critical, ks_statistic,
    min_distinguishing_arity, strength_set, Distinguishability, LinearScmSpec,
};
use indefinite_core::InterventionView;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            if rng.random::<bool>() {
                w[[i, j]] = rng.random_range(-1.0..1.0);
            }
        }
    }
    w
}

fn arb_scm() -> impl Strategy<Value = LinearScmSpec> {
    (2usize..=5, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LinearScmSpec::unit_noise(random_weights(n, &mut rng)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn equivalence_is_reflexive_and_symmetric(a in arb_scm(), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = LinearScmSpec::unit_noise(random_weights(a.n_vars(), &mut rng)).unwrap();
        prop_assert!(abstraction_equivalent(&a, &a, 1, 1e-12).unwrap());
        prop_assert_eq!(
            abstraction_equivalent(&a, &b, 1, 1e-9).unwrap(),
            abstraction_equivalent(&b, &a, 1, 1e-9).unwrap()
        );
    }

    #[test]
    fn arity_one_strengths_pin_down_weights(a in arb_scm(), seed: u64) {
        // Under do(j) the total effect of j on i moves by exactly the weight change.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = a.weights().clone();
        let n = a.n_vars();
        let i = rng.random_range(1..n);
        let j = rng.random_range(0..i);
        w[[i, j]] += 0.25;
        let b = LinearScmSpec::unit_noise(w).unwrap();
        prop_assert!(!abstraction_equivalent(&a, &b, 1, 1e-9).unwrap());
    }

    #[test]
    fn strengths_match_direct_weight_when_upstream_cut(a in arb_scm()) {
        let n = a.n_vars();
        for i in 1..n {
            let upstream: Vec<usize> = (0..i).collect();
            let t = a.total_effects(&InterventionView::new(upstream).unwrap()).unwrap();
            for j in 0..i {
                prop_assert!((t[[i, j]] - a.weights()[[i, j]]).abs() < 1e-15);
            }
        }
        let s = strength_set(&a, 1).unwrap();
        prop_assert_eq!(s.len(), n * n * (n - 1) / 2);
    }
}

#[test]
fn ks_matches_brute_force_sup() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let a: Vec<f64> = (0..rng.random_range(1..40))
            .map(|_| rng.random_range(0..10) as f64)
            .collect();
        let b: Vec<f64> = (0..rng.random_range(1..40))
            .map(|_| rng.random_range(0..10) as f64)
            .collect();
        let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let brute = a
            .iter()
            .chain(&b)
            .map(|&x| (cdf(&a, x) - cdf(&b, x)).abs())
            .fold(0.0, f64::max);
        assert!((ks_statistic(&a, &b) - brute).abs() < 1e-15);
    }
}

#[test]
fn ks_critical_value_at_five_percent() {
    // c(0.05) = 1.3581 for equal sample sizes.
    let c = ks_critical(0.05, 10_000, 10_000) / (2.0f64 / 10_000.0).sqrt();
    assert!((c - 1.358_101_5).abs() < 1e-6);
}

#[test]
fn distribution_check_separates_null_from_alternative() {
    let a = LinearScmSpec::chain(3, 0.8);
    let view = InterventionView::single(1);
    let crit = ks_critical(0.05, 5000, 5000);
    let same = distribution_check(&a, &a, &view, 5000, 11).unwrap();
    assert!(same < crit, "null statistic {same} >= {crit}");
    let b = LinearScmSpec::chain(3, 1.6);
    let diff = distribution_check(&a, &b, &view, 5000, 11).unwrap();
    assert!(diff > crit, "alternative statistic {diff} <= {crit}");
}

#[test]
fn fig7_pair_needs_two_interventions() {
    let (a, b) = fig7_pair();
    assert_eq!(
        min_distinguishing_arity(&a, &b, 1).unwrap(),
        Distinguishability::NotDistinguishable
    );
    assert_eq!(
        min_distinguishing_arity(&a, &b, 4).unwrap(),
        Distinguishability::Arity(2)
    );
}
