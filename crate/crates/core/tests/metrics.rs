use indefinite_core::graph::admissible_pairs;
use indefinite_core::metrics::{auroc, c_dis, f1, inconsistency, Confusion};
use indefinite_core::{hamming_distance, AdjacencyEstimate, CausalStructure, EstimateSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fraction of (positive, negative) pairs ranked correctly, ties counting one half.
fn pair_count_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice = 0u64;
    let mut pairs = 0u64;
    for (sp, _) in scores.iter().zip(labels).filter(|(_, l)| **l) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, l)| !**l) {
            pairs += 1;
            twice += if sp > sn {
                2
            } else if sp == sn {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * pairs) as f64
}

fn random_structure(n: usize, rng: &mut ChaCha8Rng) -> CausalStructure {
    let edges: Vec<_> = admissible_pairs(n)
        .filter(|_| rng.random::<bool>())
        .collect();
    CausalStructure::from_edges(n, edges).unwrap()
}

#[test]
fn auroc_equals_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 200 {
        let len = rng.random_range(2..60);
        // Coarse scores force plenty of ties.
        let levels = rng.random_range(2..12);
        let scores: Vec<f64> = (0..len)
            .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
            .collect();
        let labels: Vec<bool> = (0..len).map(|_| rng.random::<bool>()).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        assert_eq!(
            auroc(&scores, &labels).unwrap(),
            pair_count_auroc(&scores, &labels)
        );
        checked += 1;
    }
}

#[test]
fn c_dis_equals_hamming() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let n = rng.random_range(1..=8);
        let a = random_structure(n, &mut rng);
        let b = random_structure(n, &mut rng);
        assert_eq!(c_dis(&a, &b).unwrap(), hamming_distance(&a, &b).unwrap());
    }
}

#[test]
fn f1_matches_set_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let p = random_structure(n, &mut rng);
        let t = random_structure(n, &mut rng);
        let pe: std::collections::HashSet<_> = p.edges().into_iter().collect();
        let te: std::collections::HashSet<_> = t.edges().into_iter().collect();
        let tp = pe.intersection(&te).count() as f64;
        let expected = if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (pe.len() + te.len()) as f64
        };
        assert!((f1(&p, &t).unwrap() - expected).abs() < 1e-15);
        let c = Confusion::between(&p, &t).unwrap();
        assert_eq!(c.tp + c.fn_, te.len());
    }
}

#[test]
fn inconsistency_is_mean_square_over_admissible() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let k = n * (n - 1) / 2;
        let a: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let ea = AdjacencyEstimate::from_admissible(n, &a, EstimateSource::StructurePath).unwrap();
        let eb =
            AdjacencyEstimate::from_admissible(n, &b, EstimateSource::RepresentationPath).unwrap();
        let expected = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / k as f64;
        assert!((inconsistency(&ea, &eb).unwrap() - expected).abs() < 1e-15);
    }
}
