//! Combined objective and its exact reverse-mode gradient.
//!
//! Per sample, with `A_s` the structure-path estimate and `A_r` the
//! representation-path estimate on `X`:
//!
//! ```text
//! E        = (I - A_s) X
//! A_s^k    = A_s with the rows of view k's targets zeroed
//! X^k      = (I - A_s^k)^{-1} E
//! A_r^k    = head_k(X^k)
//! loss     = l_s * mse(A_s, A) + l_r * mse(A_r, A) + l_c * sum_k dist(A_r^k, A_s^k)
//! ```
//!
//! The backward pass walks the same graph in reverse: through the heads into
//! `X^k`, through the triangular solve into `A_s^k` and `E`, through the row
//! mask into `A_s`, through the encoder into `A_s`, and finally into the
//! structure scorer.

use super::config::{Distance, TrainConfig};
use super::model::{score_pairs, HeadMode, LearnerParams};
use super::LearnerError;
use crate::graph::{admissible_pairs, AdjacencyEstimate, CausalStructure, InterventionView};
use crate::scm::{apply_i_minus, solve_unit_lower, solve_unit_lower_transposed, NoiseMatrix};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

const COSINE_EPS: f64 = 1e-8;

/// Unweighted loss terms plus the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub structure: f64,
    pub representation: f64,
    pub consistency: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, o: &LossBreakdown) {
        self.structure += o.structure;
        self.representation += o.representation;
        self.consistency += o.consistency;
        self.total += o.total;
    }

    pub fn scale(&mut self, k: f64) {
        self.structure *= k;
        self.representation *= k;
        self.consistency *= k;
        self.total *= k;
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Distance between admissible entry vectors, with gradients w.r.t. both sides.
pub(crate) fn distance(metric: Distance, r: &[f64], s: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let p = r.len() as f64;
    match metric {
        Distance::Mse => {
            let mut v = 0.0;
            let mut dr = Vec::with_capacity(r.len());
            for (a, b) in r.iter().zip(s) {
                v += (a - b) * (a - b);
                dr.push(2.0 * (a - b) / p);
            }
            let ds = dr.iter().map(|g| -g).collect();
            (v / p, dr, ds)
        }
        Distance::Cosine => {
            let rr = r.iter().map(|a| a * a).sum::<f64>() + COSINE_EPS;
            let ss = s.iter().map(|a| a * a).sum::<f64>() + COSINE_EPS;
            let rs = r.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
            let norm = (rr * ss).sqrt();
            let c = rs / norm;
            let dr = r
                .iter()
                .zip(s)
                .map(|(a, b)| -(b / norm - c * a / rr))
                .collect();
            let ds = r
                .iter()
                .zip(s)
                .map(|(a, b)| -(a / norm - c * b / ss))
                .collect();
            (1.0 - c, dr, ds)
        }
    }
}

fn admissible(m: &Array2<f64>) -> Vec<f64> {
    admissible_pairs(m.nrows())
        .map(|(i, j)| m[[i, j]])
        .collect()
}

fn row<'a>(m: &'a ArrayView2<f64>, i: usize) -> &'a [f64] {
    m.row(i).to_slice().expect("standard layout")
}

fn mask_rows(a: &Array2<f64>, view: &InterventionView) -> Array2<f64> {
    let mut out = a.clone();
    for &t in view.targets() {
        out.row_mut(t).fill(0.0);
    }
    out
}

/// Sum over views of `dist(head_k(decode(A_s^k, E)), A_s^k)`.
pub fn consistency_loss(
    params: &LearnerParams,
    a_s: &AdjacencyEstimate,
    e: &NoiseMatrix,
    views: &[InterventionView],
    metric: Distance,
) -> Result<f64, LearnerError> {
    if e.0.nrows() != a_s.n_vars() {
        return Err(LearnerError::ShapeMismatch {
            expected: a_s.n_vars(),
            got: e.0.nrows(),
        });
    }
    if e.0.ncols() != params.dim() {
        return Err(LearnerError::ShapeMismatch {
            expected: params.dim(),
            got: e.0.ncols(),
        });
    }
    let e_std = e.0.as_standard_layout();
    let mut total = 0.0;
    for view in views {
        view.check_range(a_s.n_vars())?;
        let k = params
            .views
            .iter()
            .position(|v| v == view)
            .ok_or_else(|| LearnerError::MissingHead(view.to_string()))?;
        let head = params.head(k)?;
        let a_k = mask_rows(a_s.weights(), view);
        let x_k = solve_unit_lower(a_k.view(), e_std.view());
        let r_k = score_pairs(&head, x_k.view());
        total += distance(metric, &admissible(&r_k), &admissible(&a_k)).0;
    }
    Ok(total)
}

fn check_sample(
    params: &LearnerParams,
    x: &Array2<f64>,
    truth: &CausalStructure,
) -> Result<(), LearnerError> {
    if x.ncols() != params.dim() {
        return Err(LearnerError::ShapeMismatch {
            expected: params.dim(),
            got: x.ncols(),
        });
    }
    if truth.n_vars() != x.nrows() {
        return Err(LearnerError::ShapeMismatch {
            expected: x.nrows(),
            got: truth.n_vars(),
        });
    }
    for v in &params.views {
        v.check_range(x.nrows())?;
    }
    Ok(())
}

pub fn total_loss(
    params: &LearnerParams,
    x: &Array2<f64>,
    truth: &CausalStructure,
    cfg: &TrainConfig,
) -> Result<LossBreakdown, LearnerError> {
    check_sample(params, x, truth)?;
    Ok(sample_pass(params, x, truth, cfg, false).0)
}

/// Loss and gradient structure with the same shape as `params`.
pub fn gradients(
    params: &LearnerParams,
    x: &Array2<f64>,
    truth: &CausalStructure,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, LearnerParams), LearnerError> {
    check_sample(params, x, truth)?;
    let (loss, grad) = sample_pass(params, x, truth, cfg, true);
    Ok((loss, grad.expect("requested")))
}

/// Forward pass and, when `want_grad`, the full backward pass. Inputs are validated.
pub(crate) fn sample_pass(
    params: &LearnerParams,
    x: &Array2<f64>,
    truth: &CausalStructure,
    cfg: &TrainConfig,
    want_grad: bool,
) -> (LossBreakdown, Option<LearnerParams>) {
    let x_std = x.as_standard_layout();
    let x = x_std.view();
    let n = x.nrows();
    let d = x.ncols();
    let pairs: Vec<(usize, usize)> = admissible_pairs(n).collect();
    let target: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| if truth.has_edge(i, j) { 1.0 } else { 0.0 })
        .collect();

    let a_s = score_pairs(&params.theta_struct, x);
    let a_r = score_pairs(&params.theta_base, x);
    let (l_s, g_s_rec, _) = distance(Distance::Mse, &admissible(&a_s), &target);
    let (l_r, g_r_rec, _) = distance(Distance::Mse, &admissible(&a_r), &target);

    let mut grad = want_grad.then(|| params.zeros_like());
    let mut g_as = Array2::<f64>::zeros((n, n));
    if let Some(g) = grad.as_mut() {
        for (p, &(i, j)) in pairs.iter().enumerate() {
            g_as[[i, j]] += cfg.lambda_s * g_s_rec[p];
            params.theta_base.backward(
                row(&x, j),
                row(&x, i),
                cfg.lambda_r * g_r_rec[p],
                &mut g.theta_base,
                None,
            );
        }
    }

    let mut l_c = 0.0;
    let run_consistency = cfg.lambda_c != 0.0 && !params.views.is_empty();
    if run_consistency {
        let e = apply_i_minus(a_s.view(), x);
        let mut g_e = Array2::<f64>::zeros((n, d));
        let through_structure = want_grad && !cfg.detach_structure;
        for (k, view) in params.views.iter().enumerate() {
            let head = params.head(k).expect("one delta per view");
            let a_k = mask_rows(&a_s, view);
            let x_k = solve_unit_lower(a_k.view(), e.view());
            let xk = x_k.view();
            let r_k = score_pairs(&head, xk);
            let (dist, d_r, d_s) = distance(cfg.metric, &admissible(&r_k), &admissible(&a_k));
            l_c += dist;

            let Some(g) = grad.as_mut() else { continue };
            let mut g_head = head.zeros_like();
            let mut g_xk = Array2::<f64>::zeros((n, d));
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let d_out = cfg.lambda_c * d_r[p];
                if through_structure {
                    let (mut gc, mut ge) = (vec![0.0; d], vec![0.0; d]);
                    head.backward(
                        row(&xk, j),
                        row(&xk, i),
                        d_out,
                        &mut g_head,
                        Some((&mut gc, &mut ge)),
                    );
                    for (t, v) in g_xk.row_mut(j).iter_mut().zip(&gc) {
                        *t += v;
                    }
                    for (t, v) in g_xk.row_mut(i).iter_mut().zip(&ge) {
                        *t += v;
                    }
                } else {
                    head.backward(row(&xk, j), row(&xk, i), d_out, &mut g_head, None);
                }
            }
            let di = params.delta_index(k);
            g.deltas[di].add_assign(&g_head);
            if params.head_mode == HeadMode::Offset && !cfg.detach_base {
                g.theta_base.add_assign(&g_head);
            }

            if through_structure {
                let mut g_ak = Array2::<f64>::zeros((n, n));
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    g_ak[[i, j]] = cfg.lambda_c * d_s[p];
                }
                // X^k = (I - A^k)^{-1} E  =>  dE = (I - A^k)^{-T} dX^k,  dA^k = dE X^k^T.
                let g_ek = solve_unit_lower_transposed(a_k.view(), g_xk.view());
                for &(i, j) in &pairs {
                    g_ak[[i, j]] += g_ek.row(i).dot(&xk.row(j));
                }
                for &t in view.targets() {
                    g_ak.row_mut(t).fill(0.0);
                }
                g_as += &g_ak;
                g_e += &g_ek;
            }
        }
        if want_grad && !cfg.detach_structure {
            // E = (I - A_s) X  =>  dA_s = -dE X^T.
            for &(i, j) in &pairs {
                g_as[[i, j]] -= g_e.row(i).dot(&x.row(j));
            }
        }
    }

    if let Some(g) = grad.as_mut() {
        for &(i, j) in &pairs {
            params.theta_struct.backward(
                row(&x, j),
                row(&x, i),
                g_as[[i, j]],
                &mut g.theta_struct,
                None,
            );
        }
    }

    let loss = LossBreakdown {
        structure: l_s,
        representation: l_r,
        consistency: l_c,
        total: cfg.lambda_s * l_s + cfg.lambda_r * l_r + cfg.lambda_c * l_c,
    };
    (loss, grad)
}
