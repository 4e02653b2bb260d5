//! Interventional strength sets of linear SCMs and the checks built on them.
//!
//! A linear SCM `x = W x + u` with strictly lower-triangular `W` has total
//! effects `T = (I - W)^{-1}`. Under a view every target row of `W` is zeroed
//! before inverting. Two SCMs are abstraction-equivalent at a given arity when
//! these total effects agree for every view of that arity.

use crate::graph::{enumerate_interventions, CausalStructure, GraphError, InterventionView};
use crate::scm::solve_unit_lower;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AbstractionError {
    #[error("models have {0} and {1} variables")]
    DimensionMismatch(usize, usize),
    #[error("weights must be square and strictly lower-triangular; offending entry ({0}, {1})")]
    NotTriangular(usize, usize),
    #[error("noise std for variable {0} must be positive, got {1}")]
    InvalidNoise(usize, f64),
    #[error("noise stds differ between the models")]
    NoiseMismatch,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Scalar linear SCM with independent Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScmSpec {
    weights: Array2<f64>,
    noise_std: Vec<f64>,
}

impl LinearScmSpec {
    pub fn new(weights: Array2<f64>, noise_std: Vec<f64>) -> Result<Self, AbstractionError> {
        let (r, c) = weights.dim();
        if r != c {
            return Err(AbstractionError::DimensionMismatch(r, c));
        }
        if noise_std.len() != r {
            return Err(AbstractionError::DimensionMismatch(r, noise_std.len()));
        }
        if let Some(((i, j), _)) = weights
            .indexed_iter()
            .find(|((i, j), w)| (j >= i && **w != 0.0) || !w.is_finite())
        {
            return Err(AbstractionError::NotTriangular(i + 1, j + 1));
        }
        if let Some((i, &s)) = noise_std
            .iter()
            .enumerate()
            .find(|(_, s)| !(**s > 0.0 && s.is_finite()))
        {
            return Err(AbstractionError::InvalidNoise(i + 1, s));
        }
        Ok(Self { weights, noise_std })
    }

    /// Unit-noise SCM with the given weights.
    pub fn unit_noise(weights: Array2<f64>) -> Result<Self, AbstractionError> {
        let n = weights.nrows();
        Self::new(weights, vec![1.0; n])
    }

    /// Chain `x1 -> x2 -> ... -> xn` with a common weight.
    pub fn chain(n: usize, w: f64) -> Self {
        let mut weights = Array2::zeros((n, n));
        for i in 1..n {
            weights[[i, i - 1]] = w;
        }
        Self {
            weights,
            noise_std: vec![1.0; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn noise_std(&self) -> &[f64] {
        &self.noise_std
    }

    /// Edges with nonzero weight.
    pub fn support(&self) -> CausalStructure {
        let edges: Vec<(usize, usize)> = self
            .weights
            .indexed_iter()
            .filter(|(_, w)| **w != 0.0)
            .map(|(ij, _)| ij)
            .collect();
        CausalStructure::from_edges(self.n_vars(), edges).expect("validated on construction")
    }

    fn intervened_weights(&self, view: &InterventionView) -> Array2<f64> {
        let mut w = self.weights.clone();
        for &t in view.targets() {
            w.row_mut(t).fill(0.0);
        }
        w
    }

    /// `(I - W_do)^{-1}` for the given view.
    pub fn total_effects(&self, view: &InterventionView) -> Result<Array2<f64>, AbstractionError> {
        view.check_range(self.n_vars())?;
        let w = self.intervened_weights(view);
        let eye = Array2::eye(self.n_vars());
        Ok(solve_unit_lower(w.view(), eye.view()))
    }

    /// `n_draws` samples of the intervened model, one row per draw.
    pub fn simulate(
        &self,
        view: &InterventionView,
        n_draws: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Array2<f64>, AbstractionError> {
        let t = self.total_effects(view)?;
        let n = self.n_vars();
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let mut out = Array2::zeros((n_draws, n));
        let mut u = vec![0.0; n];
        for mut row in out.rows_mut() {
            for (k, uk) in u.iter_mut().enumerate() {
                *uk = self.noise_std[k] * std.sample(rng);
            }
            for i in 0..n {
                row[i] = (0..=i).map(|k| t[[i, k]] * u[k]).sum();
            }
        }
        Ok(out)
    }
}

/// Key of one strength: the view and the 0-based `(effect, cause)` pair.
pub type StrengthKey = (InterventionView, (usize, usize));

/// Total-effect coefficient of every admissible pair under every view.
pub type StrengthSet = BTreeMap<StrengthKey, f64>;

pub fn strength_set(scm: &LinearScmSpec, arity: usize) -> Result<StrengthSet, AbstractionError> {
    let n = scm.n_vars();
    let mut out = StrengthSet::new();
    for view in enumerate_interventions(n, arity)? {
        let t = scm.total_effects(&view)?;
        for (i, j) in crate::graph::admissible_pairs(n) {
            out.insert((view.clone(), (i, j)), t[[i, j]]);
        }
    }
    Ok(out)
}

fn same_size(a: &LinearScmSpec, b: &LinearScmSpec) -> Result<(), AbstractionError> {
    if a.n_vars() != b.n_vars() {
        return Err(AbstractionError::DimensionMismatch(a.n_vars(), b.n_vars()));
    }
    Ok(())
}

/// Strength sets agree entrywise within `tol` over all views of `arity`.
pub fn abstraction_equivalent(
    a: &LinearScmSpec,
    b: &LinearScmSpec,
    arity: usize,
    tol: f64,
) -> Result<bool, AbstractionError> {
    same_size(a, b)?;
    let sa = strength_set(a, arity)?;
    let sb = strength_set(b, arity)?;
    Ok(sa.iter().zip(&sb).all(|((ka, va), (kb, vb))| {
        debug_assert_eq!(ka, kb);
        (va - vb).abs() <= tol
    }))
}

/// Two-sample Kolmogorov-Smirnov statistic. Both samples must be non-empty.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at level `alpha`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Simulates both models under `view` and returns the largest per-variable KS statistic.
///
/// The two models draw from independent streams of `seed`.
pub fn distribution_check(
    a: &LinearScmSpec,
    b: &LinearScmSpec,
    view: &InterventionView,
    n_draws: usize,
    seed: u64,
) -> Result<f64, AbstractionError> {
    same_size(a, b)?;
    if a.noise_std != b.noise_std {
        return Err(AbstractionError::NoiseMismatch);
    }
    let mut ra = ChaCha8Rng::seed_from_u64(seed);
    ra.set_stream(1);
    let mut rb = ChaCha8Rng::seed_from_u64(seed);
    rb.set_stream(2);
    let xa = a.simulate(view, n_draws, &mut ra)?;
    let xb = b.simulate(view, n_draws, &mut rb)?;
    let mut worst: f64 = 0.0;
    for v in 0..a.n_vars() {
        let ca: Vec<f64> = xa.column(v).to_vec();
        let cb: Vec<f64> = xb.column(v).to_vec();
        worst = worst.max(ks_statistic(&ca, &cb));
    }
    Ok(worst)
}

/// `((effect, cause), connected)` for every pair touching a target.
pub type Fingerprint = Vec<((usize, usize), bool)>;

/// Per-view relationship existence: for each pair touching a target,
/// whether a directed path connects it in the intervened graph.
pub fn existence_fingerprint(
    graph: &CausalStructure,
    view: &InterventionView,
) -> Result<Fingerprint, GraphError> {
    let reach = graph.intervene(view)?.reachability();
    Ok(crate::graph::admissible_pairs(graph.n_vars())
        .filter(|&(i, j)| view.contains(i) || view.contains(j))
        .map(|(i, j)| ((i, j), reach[i][j]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distinguishability {
    Arity(usize),
    NotDistinguishable,
}

/// Smallest arity whose existence fingerprints differ between the models.
pub fn min_distinguishing_arity(
    a: &LinearScmSpec,
    b: &LinearScmSpec,
    max_arity: usize,
) -> Result<Distinguishability, AbstractionError> {
    same_size(a, b)?;
    let (ga, gb) = (a.support(), b.support());
    for arity in 1..=max_arity.min(a.n_vars()) {
        for view in enumerate_interventions(a.n_vars(), arity)? {
            if existence_fingerprint(&ga, &view)? != existence_fingerprint(&gb, &view)? {
                return Ok(Distinguishability::Arity(arity));
            }
        }
    }
    Ok(Distinguishability::NotDistinguishable)
}

/// Settings for the strength-versus-distribution agreement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CccConfig {
    pub n_vars: usize,
    pub trials: usize,
    pub n_draws: usize,
    /// Family-wise level, Bonferroni-split over views and variables.
    pub alpha: f64,
    pub arity: usize,
    /// Fraction of trials whose second model is an exact copy.
    pub identical_fraction: f64,
    pub seed: u64,
}

impl Default for CccConfig {
    fn default() -> Self {
        Self {
            n_vars: 4,
            trials: 100,
            n_draws: 10_000,
            alpha: 0.05,
            arity: 1,
            identical_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CccTrial {
    pub a: LinearScmSpec,
    pub b: LinearScmSpec,
    pub strength_equivalent: bool,
    pub max_ks: f64,
    pub critical: f64,
    pub distribution_equivalent: bool,
}

impl CccTrial {
    pub fn agrees(&self) -> bool {
        self.strength_equivalent == self.distribution_equivalent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CccReport {
    pub config: CccConfig,
    pub trials: Vec<CccTrial>,
    pub agreements: usize,
    pub fig7_arity1: Distinguishability,
    pub fig7_arity2: Distinguishability,
}

/// Chain `x1 -> x2 -> x3 -> x4` and the same chain plus `x1 -> x4`.
pub fn fig7_pair() -> (LinearScmSpec, LinearScmSpec) {
    let m = LinearScmSpec::chain(4, 0.5);
    let mut w = m.weights.clone();
    w[[3, 0]] = 0.5;
    let n = LinearScmSpec::unit_noise(w).expect("triangular");
    (m, n)
}

/// Random positive-weight model: each admissible edge present with probability 1/2.
fn random_scm(n: usize, rng: &mut ChaCha8Rng) -> LinearScmSpec {
    let coin = Uniform::new(0.0, 1.0).expect("valid range");
    let weight = Uniform::new(0.5, 1.0).expect("valid range");
    let mut w = Array2::zeros((n, n));
    for (i, j) in crate::graph::admissible_pairs(n) {
        if coin.sample(rng) < 0.5 {
            w[[i, j]] = weight.sample(rng);
        }
    }
    LinearScmSpec::unit_noise(w).expect("triangular")
}

/// Copy of `a` with one admissible weight moved by 0.5 to 1.0, staying non-negative.
///
/// Marginal KS cannot see a sign flip of a symmetric contribution, so
/// perturbations keep every weight non-negative.
fn perturb(a: &LinearScmSpec, rng: &mut ChaCha8Rng) -> LinearScmSpec {
    let n = a.n_vars();
    let pairs: Vec<(usize, usize)> = crate::graph::admissible_pairs(n).collect();
    let (i, j) = pairs[Uniform::new(0, pairs.len()).expect("non-empty").sample(rng)];
    let delta = Uniform::new(0.5, 1.0).expect("valid range").sample(rng);
    let mut w = a.weights.clone();
    let old = w[[i, j]];
    w[[i, j]] = if old >= delta {
        old - delta
    } else {
        old + delta
    };
    LinearScmSpec::new(w, a.noise_std.clone()).expect("triangular")
}

/// Draws model pairs and compares the strength verdict with the simulated
/// distribution verdict over every view of the configured arity.
pub fn run_ccc(cfg: &CccConfig) -> Result<CccReport, AbstractionError> {
    let views = enumerate_interventions(cfg.n_vars, cfg.arity)?;
    let n_tests = views.len() * cfg.n_vars;
    let critical = ks_critical(cfg.alpha / n_tests as f64, cfg.n_draws, cfg.n_draws);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_identical = (cfg.identical_fraction * cfg.trials as f64).round() as usize;

    let mut pairs = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let a = random_scm(cfg.n_vars, &mut rng);
        let b = if t < n_identical {
            a.clone()
        } else {
            perturb(&a, &mut rng)
        };
        pairs.push((a, b));
    }

    use rayon::prelude::*;
    let trials = pairs
        .into_par_iter()
        .enumerate()
        .map(|(t, (a, b))| {
            let strength_equivalent = abstraction_equivalent(&a, &b, cfg.arity, 1e-12)?;
            let mut max_ks: f64 = 0.0;
            for (k, view) in views.iter().enumerate() {
                let seed = cfg.seed ^ ((t as u64) << 32 | k as u64);
                max_ks = max_ks.max(distribution_check(&a, &b, view, cfg.n_draws, seed)?);
            }
            Ok(CccTrial {
                a,
                b,
                strength_equivalent,
                max_ks,
                critical,
                distribution_equivalent: max_ks <= critical,
            })
        })
        .collect::<Result<Vec<_>, AbstractionError>>()?;

    let agreements = trials.iter().filter(|t| t.agrees()).count();
    let (m, n) = fig7_pair();
    Ok(CccReport {
        config: cfg.clone(),
        trials,
        agreements,
        fig7_arity1: min_distinguishing_arity(&m, &n, 1)?,
        fig7_arity2: min_distinguishing_arity(&m, &n, 2)?,
    })
}
