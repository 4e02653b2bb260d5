use super::{
    gradients, total_loss, Distance, HeadMode, LearnerError, LearnerParams, MlpParams, TrainConfig,
};
use crate::graph::{admissible_pairs, enumerate_interventions, CausalStructure};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckConfig {
    pub n_vars: usize,
    pub dim: usize,
    pub hidden: usize,
    pub step: f64,
    pub tolerance: f64,
    pub head_mode: HeadMode,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            n_vars: 3,
            dim: 2,
            hidden: 4,
            step: 1e-5,
            tolerance: 1e-4,
            head_mode: HeadMode::Offset,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckCell {
    pub metric: Distance,
    pub arity: usize,
    pub shared: bool,
    pub n_params: usize,
    pub max_rel_error: f64,
}

/// Central differences against the analytic gradient for every
/// (metric, arity, shared) cell, with random parameters and data.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`. Stop-gradient flags are
/// off so the analytic gradient is the true one.
pub fn grad_check(cfg: &GradCheckConfig) -> Result<Vec<GradCheckCell>, LearnerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cells = Vec::with_capacity(8);
    for metric in [Distance::Mse, Distance::Cosine] {
        for arity in [1, 2] {
            for shared in [false, true] {
                let tc = TrainConfig {
                    metric,
                    intervention_arity: arity,
                    shared_augmentation: shared,
                    head_mode: cfg.head_mode,
                    detach_structure: false,
                    detach_base: false,
                    ..TrainConfig::default()
                };
                tc.validate(cfg.n_vars)?;
                let views = enumerate_interventions(cfg.n_vars, arity)?;
                let params = random_params(cfg, views, shared, &mut rng);
                let x = Array2::from_shape_simple_fn((cfg.n_vars, cfg.dim), || {
                    rng.random_range(-1.5..1.5)
                });
                let edges: Vec<_> = admissible_pairs(cfg.n_vars)
                    .filter(|_| rng.random::<bool>())
                    .collect();
                let truth = CausalStructure::from_edges(cfg.n_vars, edges)?;
                cells.push(GradCheckCell {
                    metric,
                    arity,
                    shared,
                    n_params: params.n_params(),
                    max_rel_error: max_rel_error(&params, &x, &truth, &tc, cfg.step)?,
                });
            }
        }
    }
    Ok(cells)
}

fn random_params(
    cfg: &GradCheckConfig,
    views: Vec<crate::graph::InterventionView>,
    shared: bool,
    rng: &mut ChaCha8Rng,
) -> LearnerParams {
    let mut block = || {
        let mut m = MlpParams::zeros(cfg.dim, cfg.hidden);
        m.values_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-1.0..1.0));
        m
    };
    let n_deltas = if shared { 1 } else { views.len() };
    LearnerParams {
        theta_struct: block(),
        theta_base: block(),
        deltas: (0..n_deltas).map(|_| block()).collect(),
        views,
        shared_augmentation: shared,
        head_mode: cfg.head_mode,
    }
}

fn max_rel_error(
    params: &LearnerParams,
    x: &Array2<f64>,
    truth: &CausalStructure,
    tc: &TrainConfig,
    step: f64,
) -> Result<f64, LearnerError> {
    let (_, grad) = gradients(params, x, truth, tc)?;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (b, g) in grad.blocks().enumerate() {
        for (k, &analytic) in g.values().iter().enumerate() {
            let mut eval = |h: f64| -> Result<f64, LearnerError> {
                let orig = probe.blocks().nth(b).expect("block").values()[k];
                probe.blocks_mut().nth(b).expect("block").values_mut()[k] = orig + h;
                let l = total_loss(&probe, x, truth, tc)?.total;
                probe.blocks_mut().nth(b).expect("block").values_mut()[k] = orig;
                Ok(l)
            };
            let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
