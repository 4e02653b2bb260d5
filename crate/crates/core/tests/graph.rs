use indefinite_core::graph::{admissible_pairs, n_admissible};
use indefinite_core::{
    binarize, enumerate_interventions, hamming_distance, sample_intervention_subset,
    validate_structure, AdjacencyEstimate, CausalStructure, EstimateSource,
};
use ndarray::Array2;
use proptest::prelude::*;
use std::collections::HashSet;

fn arb_structure(n: usize) -> impl Strategy<Value = CausalStructure> {
    proptest::collection::vec(any::<bool>(), n_admissible(n)).prop_map(move |bits| {
        let edges = admissible_pairs(n)
            .zip(bits)
            .filter(|(_, b)| *b)
            .map(|(p, _)| p);
        CausalStructure::from_edges(n, edges).unwrap()
    })
}

fn arb_sized() -> impl Strategy<Value = CausalStructure> {
    (1usize..=7).prop_flat_map(arb_structure)
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

proptest! {
    #[test]
    fn adjacency_is_nilpotent(s in arb_sized()) {
        let a = s.to_matrix();
        let mut p = Array2::<f64>::eye(s.n_vars());
        for _ in 0..s.n_vars() {
            p = p.dot(&a);
        }
        prop_assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn validate_then_binarize_is_identity(s in arb_sized()) {
        let m = s.to_matrix();
        let v = validate_structure(&m).unwrap();
        prop_assert_eq!(&v, &s);
        let est = AdjacencyEstimate::new(m.clone(), EstimateSource::StructurePath).unwrap();
        let b = binarize(&est, 0.5);
        prop_assert_eq!(&b, &s);
        prop_assert_eq!(validate_structure(&b.to_matrix()).unwrap(), s);
    }

    #[test]
    fn hamming_is_a_metric(
        (a, b, c) in (1usize..=6).prop_flat_map(|n| (arb_structure(n), arb_structure(n), arb_structure(n)))
    ) {
        let d = |x: &CausalStructure, y: &CausalStructure| hamming_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &b) == 0, a == b);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
    }

    #[test]
    fn enumeration_is_complete_and_distinct(n in 1usize..=8, k in 1usize..=8) {
        prop_assume!(k <= n);
        let views = enumerate_interventions(n, k).unwrap();
        prop_assert_eq!(views.len(), binomial(n, k));
        let distinct: HashSet<_> = views.iter().cloned().collect();
        prop_assert_eq!(distinct.len(), views.len());
        prop_assert!(views.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn subset_size_and_membership(n in 1usize..=6, k in 1usize..=3, frac in 0.0f64..=1.0, seed: u64) {
        prop_assume!(k <= n);
        let views = enumerate_interventions(n, k).unwrap();
        let sub = sample_intervention_subset(&views, frac, seed);
        prop_assert_eq!(sub.len(), (frac * views.len() as f64).round() as usize);
        prop_assert!(sub.iter().all(|v| views.contains(v)));
        prop_assert_eq!(sample_intervention_subset(&views, frac, seed), sub);
    }
}

#[test]
fn spec_examples() {
    assert_eq!(enumerate_interventions(4, 2).unwrap().len(), 6);
    assert_eq!(enumerate_interventions(4, 1).unwrap().len(), 4);
    assert_eq!(
        enumerate_interventions(3, 3).unwrap()[0].targets(),
        &[0, 1, 2]
    );
    assert_eq!(
        hamming_distance(&CausalStructure::complete(4), &CausalStructure::empty(4)).unwrap(),
        6
    );
    let views = enumerate_interventions(4, 2).unwrap();
    assert_eq!(sample_intervention_subset(&views, 0.5, 3).len(), 3);
}
