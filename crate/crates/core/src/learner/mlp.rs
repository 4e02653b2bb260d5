//! Two-layer pair scorer: `sigmoid(w2 . tanh(W1 [cause; effect] + b1) + b2)`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

/// Flat parameter block. Layout: `W1` (hidden x 2*dim, row-major), `b1`, `w2`, `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    dim: usize,
    hidden: usize,
    values: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl MlpParams {
    pub fn n_params(dim: usize, hidden: usize) -> usize {
        hidden * 2 * dim + 2 * hidden + 1
    }

    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            dim,
            hidden,
            values: vec![0.0; Self::n_params(dim, hidden)],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(dim, hidden);
        let a1 = (6.0 / (2 * dim + hidden) as f64).sqrt();
        let u1 = Uniform::new_inclusive(-a1, a1).expect("finite bound");
        for w in p.w1_mut() {
            *w = u1.sample(rng);
        }
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        let u2 = Uniform::new_inclusive(-a2, a2).expect("finite bound");
        let off = hidden * 2 * dim + hidden;
        for w in &mut p.values[off..off + hidden] {
            *w = u2.sample(rng);
        }
        p
    }

    /// Builds from explicit layers; `w1` is row-major `hidden x 2*dim`.
    pub fn from_parts(dim: usize, w1: &[f64], b1: &[f64], w2: &[f64], b2: f64) -> Option<Self> {
        let hidden = b1.len();
        if w1.len() != hidden * 2 * dim || w2.len() != hidden {
            return None;
        }
        let mut values = Vec::with_capacity(Self::n_params(dim, hidden));
        values.extend_from_slice(w1);
        values.extend_from_slice(b1);
        values.extend_from_slice(w2);
        values.push(b2);
        Some(Self {
            dim,
            hidden,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dim, self.hidden)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dim == other.dim && self.hidden == other.hidden
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn w1_mut(&mut self) -> &mut [f64] {
        let n = self.hidden * 2 * self.dim;
        &mut self.values[..n]
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let n1 = self.hidden * 2 * self.dim;
        let h = self.hidden;
        (
            &self.values[..n1],
            &self.values[n1..n1 + h],
            &self.values[n1 + h..n1 + 2 * h],
            self.values[n1 + 2 * h],
        )
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in &mut self.values {
            *a *= k;
        }
    }

    fn hidden_pre(&self, cause: &[f64], effect: &[f64], out: &mut [f64]) {
        let (w1, b1, _, _) = self.split();
        let d = self.dim;
        for (r, o) in out.iter_mut().enumerate() {
            let row = &w1[r * 2 * d..(r + 1) * 2 * d];
            let mut s = b1[r];
            for (w, v) in row[..d].iter().zip(cause) {
                s += w * v;
            }
            for (w, v) in row[d..].iter().zip(effect) {
                s += w * v;
            }
            *o = s;
        }
    }

    /// Edge strength for `cause -> effect`.
    pub fn forward(&self, cause: &[f64], effect: &[f64]) -> f64 {
        let mut z = vec![0.0; self.hidden];
        self.hidden_pre(cause, effect, &mut z);
        let (_, _, w2, b2) = self.split();
        let o = z.iter().zip(w2).map(|(a, w)| a.tanh() * w).sum::<f64>() + b2;
        sigmoid(o)
    }

    /// Accumulates `d_out * d(forward)/d(params)` into `grad`, and optionally the
    /// input gradients into `d_cause` / `d_effect`.
    pub fn backward(
        &self,
        cause: &[f64],
        effect: &[f64],
        d_out: f64,
        grad: &mut MlpParams,
        inputs: Option<(&mut [f64], &mut [f64])>,
    ) {
        if d_out == 0.0 {
            return;
        }
        let h = self.hidden;
        let d = self.dim;
        let mut z = vec![0.0; h];
        self.hidden_pre(cause, effect, &mut z);
        for v in &mut z {
            *v = v.tanh();
        }
        let (w1, _, w2, b2) = self.split();
        let o = z.iter().zip(w2).map(|(a, w)| a * w).sum::<f64>() + b2;
        let y = sigmoid(o);
        let d_o = d_out * y * (1.0 - y);

        let n1 = h * 2 * d;
        let (g_w1, rest) = grad.values.split_at_mut(n1);
        let (g_b1, rest) = rest.split_at_mut(h);
        let (g_w2, g_b2) = rest.split_at_mut(h);
        g_b2[0] += d_o;
        let mut d_a = vec![0.0; h];
        for r in 0..h {
            g_w2[r] += d_o * z[r];
            d_a[r] = d_o * w2[r] * (1.0 - z[r] * z[r]);
        }
        for r in 0..h {
            let da = d_a[r];
            if da == 0.0 {
                continue;
            }
            g_b1[r] += da;
            let g_row = &mut g_w1[r * 2 * d..(r + 1) * 2 * d];
            for (g, v) in g_row[..d].iter_mut().zip(cause) {
                *g += da * v;
            }
            for (g, v) in g_row[d..].iter_mut().zip(effect) {
                *g += da * v;
            }
        }
        if let Some((dc, de)) = inputs {
            for r in 0..h {
                let da = d_a[r];
                if da == 0.0 {
                    continue;
                }
                let row = &w1[r * 2 * d..(r + 1) * 2 * d];
                for (g, w) in dc.iter_mut().zip(&row[..d]) {
                    *g += da * w;
                }
                for (g, w) in de.iter_mut().zip(&row[d..]) {
                    *g += da * w;
                }
            }
        }
    }
}
