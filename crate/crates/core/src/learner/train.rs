use super::config::{Selection, TrainConfig};
use super::loss::{sample_pass, LossBreakdown};
use super::model::{score_pairs, LearnerParams};
use super::LearnerError;
use crate::graph::{admissible_pairs, enumerate_interventions, sample_intervention_subset};
use crate::metrics::{auroc_or_chance, Confusion, EvalValues};
use crate::synth::{IndefiniteDataset, IndefiniteSample, Split};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

// Independent RNG streams so that paired runs share everything they can.
const STREAM_STRUCT: u64 = 1;
const STREAM_BASE: u64 = 2;
const STREAM_DELTA: u64 = 3;
const STREAM_VIEWS: u64 = 4;
const STREAM_SHUFFLE: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Adaptive moment estimation over every parameter block.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &LearnerParams, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .blocks()
            .map(|b| vec![0.0; b.values().len()])
            .collect();
        Self {
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Updates the first `n_blocks` blocks; the rest are left untouched.
    pub fn step(&mut self, params: &mut LearnerParams, grad: &LearnerParams, n_blocks: usize) {
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step);
        let bc2 = 1.0 - BETA2.powi(self.step);
        for (((p, g), m), v) in params
            .blocks_mut()
            .zip(grad.blocks())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
            .take(n_blocks)
        {
            for (((w, &gw), mw), vw) in p
                .values_mut()
                .iter_mut()
                .zip(g.values())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mw = BETA1 * *mw + (1.0 - BETA1) * gw;
                *vw = BETA2 * *vw + (1.0 - BETA2) * gw * gw;
                let m_hat = *mw / bc1;
                let v_hat = *vw / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stru_auroc: f64,
    pub stru_hd: f64,
    pub rep_auroc: f64,
    pub rep_f1: f64,
    pub inco_mse: f64,
    pub cons_auroc: f64,
    /// Mean training losses over the epoch.
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub series: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub params: LearnerParams,
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// Per-epoch metrics; contains no timing so identical runs give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,stru_auroc,stru_hd,rep_auroc,rep_f1,inco_mse,cons_auroc,loss_structure,loss_representation,loss_consistency,loss_total\n",
        );
        for r in &self.series {
            out.push_str(&format!(
                "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
                r.epoch,
                r.stru_auroc,
                r.stru_hd,
                r.rep_auroc,
                r.rep_f1,
                r.inco_mse,
                r.cons_auroc,
                r.loss.structure,
                r.loss.representation,
                r.loss.consistency,
                r.loss.total
            ));
        }
        out
    }
}

/// Structure-path and representation-path quality plus their agreement,
/// pooled over the admissible entries of every sample.
pub fn evaluate<'a>(
    params: &LearnerParams,
    samples: impl IntoIterator<Item = &'a IndefiniteSample>,
) -> EvalValues {
    let samples: Vec<&IndefiniteSample> = samples.into_iter().collect();
    let per_sample: Vec<_> = samples
        .par_iter()
        .map(|s| {
            let x = s.x.as_standard_layout();
            let a_s = score_pairs(&params.theta_struct, x.view());
            let a_r = score_pairs(&params.theta_base, x.view());
            let n = a_s.nrows();
            let mut out = (
                Vec::new(),
                Vec::new(),
                Vec::new(),
                0usize,
                Confusion::default(),
                0.0,
            );
            for (i, j) in admissible_pairs(n) {
                let (vs, vr, t) = (a_s[[i, j]], a_r[[i, j]], s.truth.has_edge(i, j));
                out.0.push(vs);
                out.1.push(vr);
                out.2.push(t);
                if (vs > 0.5) != t {
                    out.3 += 1;
                }
                match (vr > 0.5, t) {
                    (true, true) => out.4.tp += 1,
                    (true, false) => out.4.fp += 1,
                    (false, true) => out.4.fn_ += 1,
                    _ => {}
                }
                out.5 += (vs - vr) * (vs - vr);
            }
            out
        })
        .collect();

    let mut s_scores = Vec::new();
    let mut r_scores = Vec::new();
    let mut labels = Vec::new();
    let mut hd_total = 0usize;
    let mut conf = Confusion::default();
    let mut sq = 0.0;
    for (s, r, t, hd, c, q) in per_sample {
        s_scores.extend(s);
        r_scores.extend(r);
        labels.extend(t);
        hd_total += hd;
        conf.add(c);
        sq += q;
    }
    let s_binary: Vec<bool> = s_scores.iter().map(|&v| v > 0.5).collect();
    let n_samples = samples.len().max(1) as f64;
    let n_entries = s_scores.len().max(1) as f64;
    EvalValues {
        stru_auroc: auroc_or_chance(&s_scores, &labels),
        stru_hd: hd_total as f64 / n_samples,
        rep_auroc: auroc_or_chance(&r_scores, &labels),
        rep_f1: conf.f1(),
        cons_auroc: auroc_or_chance(&r_scores, &s_binary),
        inco_mse: sq / n_entries,
    }
}

/// Mean weighted reconstruction loss; the consistency term is left out.
fn reconstruction_loss(
    params: &LearnerParams,
    samples: &[&IndefiniteSample],
    cfg: &TrainConfig,
) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let probe = TrainConfig {
        lambda_c: 0.0,
        ..cfg.clone()
    };
    let total: f64 = samples
        .par_iter()
        .map(|s| sample_pass(params, &s.x, &s.truth, &probe, false).0.total)
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    total / samples.len() as f64
}

/// Views selected for a run: all views of the configured arity, subsampled.
pub fn configured_views(
    n_vars: usize,
    cfg: &TrainConfig,
) -> Result<Vec<crate::graph::InterventionView>, LearnerError> {
    let all = enumerate_interventions(n_vars, cfg.intervention_arity)?;
    let mut rng = stream(cfg.seed, STREAM_VIEWS);
    let seed = rand::Rng::random::<u64>(&mut rng);
    Ok(sample_intervention_subset(
        &all,
        cfg.intervention_fraction,
        seed,
    ))
}

pub fn init_params(
    dim: usize,
    n_vars: usize,
    cfg: &TrainConfig,
) -> Result<LearnerParams, LearnerError> {
    let views = configured_views(n_vars, cfg)?;
    Ok(LearnerParams::init(
        dim,
        cfg.hidden,
        views,
        cfg.shared_augmentation,
        cfg.head_mode,
        &mut stream(cfg.seed, STREAM_STRUCT),
        &mut stream(cfg.seed, STREAM_BASE),
        &mut stream(cfg.seed, STREAM_DELTA),
    ))
}

/// Mini-batch training from freshly initialised parameters.
pub fn train(ds: &IndefiniteDataset, cfg: &TrainConfig) -> Result<TrainReport, LearnerError> {
    cfg.validate(ds.n_vars())?;
    let params = init_params(ds.dim(), ds.n_vars(), cfg)?;
    train_from(ds, cfg, params)
}

/// Mini-batch training from the given parameters.
pub fn train_from(
    ds: &IndefiniteDataset,
    cfg: &TrainConfig,
    mut params: LearnerParams,
) -> Result<TrainReport, LearnerError> {
    cfg.validate(ds.n_vars())?;
    let start = Instant::now();
    let train_all: Vec<&IndefiniteSample> = ds.split(Split::Train).collect();
    let n_train = ((cfg.train_fraction * train_all.len() as f64).round() as usize)
        .clamp(1, train_all.len().max(1));
    let mut train_set: Vec<&IndefiniteSample> = train_all.into_iter().take(n_train).collect();
    if train_set.is_empty() {
        return Err(LearnerError::InvalidConfig("train split is empty".into()));
    }
    let valid: Vec<&IndefiniteSample> = ds.split(Split::Valid).collect();

    // Without the consistency term the deltas are never touched.
    let active_blocks = if cfg.lambda_c == 0.0 {
        2
    } else {
        2 + params.deltas.len()
    };
    let mut adam = Adam::new(&params, cfg.learning_rate);
    let mut shuffle_rng = stream(cfg.seed, STREAM_SHUFFLE);
    let mut series = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, LearnerParams)> = None;

    for epoch in 1..=cfg.epochs {
        train_set.shuffle(&mut shuffle_rng);
        let mut epoch_loss = LossBreakdown::default();
        for batch in train_set.chunks(cfg.batch_size) {
            let results: Vec<(LossBreakdown, LearnerParams)> = batch
                .par_iter()
                .map(|s| {
                    let (l, g) = sample_pass(&params, &s.x, &s.truth, cfg, true);
                    (l, g.expect("requested"))
                })
                .collect();
            // Index-ordered reduction keeps results independent of the worker count.
            let mut grad = params.zeros_like();
            let mut batch_loss = LossBreakdown::default();
            for (l, g) in &results {
                batch_loss.add(l);
                grad.add_assign(g);
            }
            if !batch_loss.is_finite() {
                return Err(LearnerError::NonFiniteLoss { epoch });
            }
            epoch_loss.add(&batch_loss);
            grad.scale(1.0 / batch.len() as f64);
            adam.step(&mut params, &grad, active_blocks);
        }
        epoch_loss.scale(1.0 / train_set.len() as f64);

        let val = evaluate(&params, valid.iter().copied());
        let score = match cfg.selection {
            Selection::ConsistencyAuroc => val.cons_auroc,
            Selection::ReconstructionLoss => -reconstruction_loss(&params, &valid, cfg),
            Selection::LastEpoch => epoch as f64,
        };
        series.push(EpochRecord {
            epoch,
            stru_auroc: val.stru_auroc,
            stru_hd: val.stru_hd,
            rep_auroc: val.rep_auroc,
            rep_f1: val.rep_f1,
            inco_mse: val.inco_mse,
            cons_auroc: val.cons_auroc,
            loss: epoch_loss,
        });
        if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            best = Some((score, epoch, params.clone()));
        }
    }

    let (best_epoch, params) = match best {
        Some((_, e, p)) => (Some(e), p),
        None => (None, params),
    };
    Ok(TrainReport {
        config: cfg.clone(),
        series,
        best_epoch,
        params,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
