use indefinite_core::graph::enumerate_interventions;
use indefinite_core::learner::{
    classify_pairs, estimate_structure, gradients, init_params, total_loss, train, Distance,
    HeadMode, LearnerParams, TrainConfig,
};
use indefinite_core::synth::{sample_dataset, Split};
use indefinite_core::{CausalStructure, DatasetSpec, InterventionView, MlpParams};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn random_params(
    dim: usize,
    hidden: usize,
    views: Vec<InterventionView>,
    shared: bool,
    mode: HeadMode,
    seed: u64,
) -> LearnerParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_blocks = if shared { 1 } else { views.len() };
    let mut mlp = || {
        let mut m = MlpParams::zeros(dim, hidden);
        for v in m.values_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        m
    };
    LearnerParams {
        theta_struct: mlp(),
        theta_base: mlp(),
        deltas: (0..n_blocks).map(|_| mlp()).collect(),
        views,
        shared_augmentation: shared,
        head_mode: mode,
    }
}

fn sample(n: usize, d: usize, seed: u64) -> (Array2<f64>, CausalStructure) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.5..1.5));
    let edges: Vec<_> = indefinite_core::graph::admissible_pairs(n)
        .filter(|_| rng.random::<bool>())
        .collect();
    (x, CausalStructure::from_edges(n, edges).unwrap())
}

/// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)` over every parameter.
fn max_relative_error(
    params: &LearnerParams,
    x: &Array2<f64>,
    truth: &CausalStructure,
    cfg: &TrainConfig,
) -> f64 {
    let (_, grad) = gradients(params, x, truth, cfg).unwrap();
    let analytic: Vec<f64> = grad.blocks().flat_map(|b| b.values().to_vec()).collect();
    let mut worst: f64 = 0.0;
    let mut idx = 0;
    let n_blocks = params.blocks().count();
    for b in 0..n_blocks {
        let len = params.blocks().nth(b).unwrap().values().len();
        for k in 0..len {
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.blocks_mut().nth(b).unwrap().values_mut()[k] += delta;
                total_loss(&p, x, truth, cfg).unwrap().total
            };
            let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            let a = analytic[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            idx += 1;
        }
    }
    worst
}

fn check_cell(metric: Distance, arity: usize, shared: bool, mode: HeadMode) -> f64 {
    let (n, d, h) = (3, 2, 4);
    let views = enumerate_interventions(n, arity).unwrap();
    let cfg = TrainConfig {
        metric,
        intervention_arity: arity,
        shared_augmentation: shared,
        head_mode: mode,
        lambda_s: 0.7,
        lambda_r: 1.3,
        lambda_c: 1.1,
        detach_structure: false,
        detach_base: false,
        ..TrainConfig::default()
    };
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let params = random_params(d, h, views.clone(), shared, mode, seed);
        let (x, truth) = sample(n, d, 100 + seed);
        worst = worst.max(max_relative_error(&params, &x, &truth, &cfg));
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    for mode in [HeadMode::Offset, HeadMode::Independent] {
        for metric in [Distance::Mse, Distance::Cosine] {
            for arity in [1, 2] {
                for shared in [false, true] {
                    let err = check_cell(metric, arity, shared, mode);
                    assert!(
                        err < 1e-4,
                        "{mode:?} {metric:?} arity {arity} shared {shared}: {err:e}"
                    );
                }
            }
        }
    }
}

#[test]
fn shared_delta_gradient_is_sum_of_per_view_gradients() {
    let (n, d, h) = (4, 3, 5);
    let views = enumerate_interventions(n, 2).unwrap();
    let (x, truth) = sample(n, d, 9);
    for mode in [HeadMode::Offset, HeadMode::Independent] {
        let shared = random_params(d, h, views.clone(), true, mode, 4);
        let cfg = TrainConfig {
            head_mode: mode,
            ..TrainConfig::default()
        };
        let (_, g_shared) = gradients(&shared, &x, &truth, &cfg).unwrap();

        // Per-view copies of the one block, each differentiated independently.
        let mut per_view = shared.clone();
        per_view.shared_augmentation = false;
        per_view.deltas = vec![shared.deltas[0].clone(); views.len()];
        let (_, g_per) = gradients(&per_view, &x, &truth, &cfg).unwrap();
        let mut sum = g_per.deltas[0].zeros_like();
        for g in &g_per.deltas {
            sum.add_assign(g);
        }
        for (a, b) in g_shared.deltas[0].values().iter().zip(sum.values()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        assert_eq!(g_shared.theta_struct, g_per.theta_struct);
    }
}

#[test]
fn zero_lambdas_give_zero_gradients() {
    let views = enumerate_interventions(3, 1).unwrap();
    let params = random_params(2, 3, views, false, HeadMode::Offset, 1);
    let (x, truth) = sample(3, 2, 2);
    let cfg = TrainConfig {
        lambda_s: 0.0,
        lambda_r: 0.0,
        lambda_c: 0.0,
        ..TrainConfig::default()
    };
    let (_, g) = gradients(&params, &x, &truth, &cfg).unwrap();
    assert!(g.blocks().all(|b| b.values().iter().all(|&v| v == 0.0)));
}

fn small_spec(seed: u64) -> DatasetSpec {
    DatasetSpec {
        n_samples: 120,
        dim: 4,
        seed,
        ..DatasetSpec::default()
    }
}

#[test]
fn deltas_are_never_read_without_consistency() {
    let ds = sample_dataset(&small_spec(2)).unwrap();
    let cfg = TrainConfig {
        lambda_c: 0.0,
        epochs: 3,
        hidden: 6,
        ..TrainConfig::default()
    };
    let clean = init_params(ds.dim(), ds.n_vars(), &cfg).unwrap();
    let mut poisoned = clean.clone();
    for d in &mut poisoned.deltas {
        d.values_mut().fill(f64::NAN);
    }
    let a = indefinite_core::learner::train_from(&ds, &cfg, clean).unwrap();
    let b = indefinite_core::learner::train_from(&ds, &cfg, poisoned).unwrap();
    assert_eq!(a.series, b.series);
    assert_eq!(a.params.theta_struct, b.params.theta_struct);
    assert_eq!(a.params.theta_base, b.params.theta_base);
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let ds = sample_dataset(&small_spec(5)).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        hidden: 6,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(&ds, &cfg).unwrap())
    };
    let (a, b, c) = (run(1), run(4), run(4));
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(b.to_csv(), c.to_csv());
    assert_eq!(a.params, b.params);
}

#[test]
fn zero_epochs_return_initial_params() {
    let ds = sample_dataset(&small_spec(1)).unwrap();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let report = train(&ds, &cfg).unwrap();
    assert!(report.series.is_empty());
    assert_eq!(report.best_epoch, None);
    assert_eq!(
        report.params,
        init_params(ds.dim(), ds.n_vars(), &cfg).unwrap()
    );
}

#[test]
fn training_emits_finite_probabilities() {
    let ds = sample_dataset(&small_spec(3)).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        hidden: 8,
        ..TrainConfig::default()
    };
    let report = train(&ds, &cfg).unwrap();
    assert_eq!(report.series.len(), 2);
    for s in ds.split(Split::Test) {
        for est in [
            estimate_structure(&report.params.theta_struct, &s.x).unwrap(),
            classify_pairs(&report.params.theta_base, &s.x).unwrap(),
        ] {
            assert!(est.admissible_values().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }
}

#[test]
fn random_init_loss_is_positive_and_finite() {
    let ds = sample_dataset(&DatasetSpec::default()).unwrap();
    let cfg = TrainConfig::default();
    let params = init_params(ds.dim(), ds.n_vars(), &cfg).unwrap();
    for s in ds.samples.iter().take(32) {
        let l = total_loss(&params, &s.x, &s.truth, &cfg).unwrap();
        assert!(l.total > 0.0 && l.total.is_finite());
    }
}

#[test]
fn per_view_heads_reach_lower_consistency_loss_than_shared() {
    let mut per_view = 0.0;
    let mut shared = 0.0;
    for seed in 0..5 {
        let ds = sample_dataset(&DatasetSpec {
            n_samples: 300,
            seed,
            ..DatasetSpec::default()
        })
        .unwrap();
        let min_consistency = |shared_augmentation: bool| {
            let cfg = TrainConfig {
                epochs: 20,
                seed,
                shared_augmentation,
                ..TrainConfig::default()
            };
            let report = train(&ds, &cfg).unwrap();
            report
                .series
                .iter()
                .map(|r| r.loss.consistency)
                .fold(f64::INFINITY, f64::min)
        };
        per_view += min_consistency(false) / 5.0;
        shared += min_consistency(true) / 5.0;
    }
    assert!(per_view <= shared, "per-view {per_view} > shared {shared}");
}
