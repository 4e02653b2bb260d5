//! Adjacency types shared by every other module.
//!
//! Entry `(i, j)` of an adjacency matrix means variable `x_j` causes `x_i`.
//! Variables are indexed in time order, so only strictly lower-triangular
//! entries (`j < i`) can ever host an edge. Those are the *admissible*
//! entries; everything else is identically zero.
//!
//! Indices are 0-based in code and 1-based in every serialized form.

use ndarray::Array2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("adjacency matrix is {rows}x{cols}, expected square")]
    NonSquare { rows: usize, cols: usize },
    #[error("entry ({row}, {col}) is {value}, expected 0 or 1")]
    NonBinaryEntry {
        row: usize,
        col: usize,
        value: String,
    },
    /// 1-based (effect, cause) of an edge that contradicts the time order.
    #[error("edge at ({0}, {1}) violates the time order")]
    TimeOrderViolation(usize, usize),
    #[error("dimension mismatch: {0} vs {1} variables")]
    DimensionMismatch(usize, usize),
    #[error("arity {arity} out of range for {n_vars} variables")]
    ArityOutOfRange { n_vars: usize, arity: usize },
    #[error("variable index {index} out of range for {n_vars} variables")]
    IndexOutOfRange { index: usize, n_vars: usize },
    #[error("intervention view must have at least one distinct target")]
    EmptyView,
    #[error("duplicate intervention target {0}")]
    DuplicateTarget(usize),
    #[error("weight at ({row}, {col}) = {value} is not a valid admissible strength")]
    InvalidWeight { row: usize, col: usize, value: f64 },
    #[error("structure needs at least one variable")]
    Empty,
}

/// Iterates admissible `(effect, cause)` positions in row-major order.
pub fn admissible_pairs(n_vars: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n_vars).flat_map(|i| (0..i).map(move |j| (i, j)))
}

pub fn n_admissible(n_vars: usize) -> usize {
    n_vars * n_vars.saturating_sub(1) / 2
}

/// Ground-truth or binarized DAG over time-ordered variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CausalStructure {
    n_vars: usize,
    adj: Vec<bool>,
}

impl CausalStructure {
    pub fn empty(n_vars: usize) -> Self {
        Self {
            n_vars,
            adj: vec![false; n_vars * n_vars],
        }
    }

    /// Builds a structure from 0-based `(effect, cause)` pairs.
    pub fn from_edges(
        n_vars: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        if n_vars == 0 {
            return Err(GraphError::Empty);
        }
        let mut s = Self::empty(n_vars);
        for (i, j) in edges {
            if i >= n_vars || j >= n_vars {
                return Err(GraphError::IndexOutOfRange {
                    index: i.max(j) + 1,
                    n_vars,
                });
            }
            if j >= i {
                return Err(GraphError::TimeOrderViolation(i + 1, j + 1));
            }
            s.adj[i * n_vars + j] = true;
        }
        Ok(s)
    }

    /// Every admissible entry set.
    pub fn complete(n_vars: usize) -> Self {
        Self::from_edges(n_vars, admissible_pairs(n_vars)).expect("admissible by construction")
    }

    /// Chain `x_1 -> x_2 -> ... -> x_n`.
    pub fn chain(n_vars: usize) -> Self {
        Self::from_edges(n_vars, (1..n_vars).map(|i| (i, i - 1)))
            .expect("admissible by construction")
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn has_edge(&self, effect: usize, cause: usize) -> bool {
        self.adj[effect * self.n_vars + cause]
    }

    pub(crate) fn set_edge(&mut self, effect: usize, cause: usize, on: bool) {
        debug_assert!(cause < effect);
        self.adj[effect * self.n_vars + cause] = on;
    }

    /// 0-based `(effect, cause)` pairs, row-major.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        admissible_pairs(self.n_vars)
            .filter(|&(i, j)| self.has_edge(i, j))
            .collect()
    }

    pub fn n_edges(&self) -> usize {
        self.adj.iter().filter(|&&b| b).count()
    }

    pub fn parents(&self, effect: usize) -> Vec<usize> {
        (0..effect).filter(|&j| self.has_edge(effect, j)).collect()
    }

    pub fn to_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n_vars, self.n_vars), |(i, j)| {
            if self.has_edge(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Admissible entries flattened row-major, as 0/1 labels.
    pub fn admissible_labels(&self) -> Vec<bool> {
        admissible_pairs(self.n_vars)
            .map(|(i, j)| self.has_edge(i, j))
            .collect()
    }

    /// Reachability under the given edges: `out[i][j]` iff a directed path `j -> ... -> i` exists.
    pub fn reachability(&self) -> Vec<Vec<bool>> {
        let n = self.n_vars;
        let mut reach = vec![vec![false; n]; n];
        // Time order is a topological order, so one forward pass suffices.
        for i in 0..n {
            for j in 0..i {
                if self.has_edge(i, j) {
                    let (upstream, rest) = reach.split_at_mut(i);
                    let row = &mut rest[0];
                    row[j] = true;
                    for (r, &via) in row[..j].iter_mut().zip(&upstream[j][..j]) {
                        *r |= via;
                    }
                }
            }
        }
        reach
    }

    /// Row-zeroing intervention on a binary structure.
    pub fn intervene(&self, view: &InterventionView) -> Result<Self, GraphError> {
        view.check_range(self.n_vars)?;
        let mut out = self.clone();
        for &t in view.targets() {
            for j in 0..t {
                out.set_edge(t, j, false);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for CausalStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n_vars {
            let row: Vec<&str> = (0..self.n_vars)
                .map(|j| if self.has_edge(i, j) { "1" } else { "0" })
                .collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct StructureJson {
    n_vars: usize,
    edges: Vec<[usize; 2]>,
}

impl Serialize for CausalStructure {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        StructureJson {
            n_vars: self.n_vars,
            edges: self
                .edges()
                .into_iter()
                .map(|(i, j)| [i + 1, j + 1])
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CausalStructure {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = StructureJson::deserialize(deserializer)?;
        let mut edges = Vec::with_capacity(raw.edges.len());
        for [i, j] in raw.edges {
            if i == 0 || j == 0 {
                return Err(serde::de::Error::custom("edge indices are 1-based"));
            }
            edges.push((i - 1, j - 1));
        }
        CausalStructure::from_edges(raw.n_vars, edges).map_err(serde::de::Error::custom)
    }
}

/// Which path of the model produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateSource {
    StructurePath,
    RepresentationPath,
}

/// Weighted adjacency in `[0, 1]`, zero off the admissible entries.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyEstimate {
    weights: Array2<f64>,
    source: EstimateSource,
}

impl AdjacencyEstimate {
    pub fn new(weights: Array2<f64>, source: EstimateSource) -> Result<Self, GraphError> {
        let (rows, cols) = weights.dim();
        if rows != cols {
            return Err(GraphError::NonSquare { rows, cols });
        }
        for ((i, j), &w) in weights.indexed_iter() {
            let ok = if j < i {
                (0.0..=1.0).contains(&w)
            } else {
                w == 0.0
            };
            if !ok {
                return Err(GraphError::InvalidWeight {
                    row: i + 1,
                    col: j + 1,
                    value: w,
                });
            }
        }
        Ok(Self { weights, source })
    }

    /// Builds from admissible values listed in [`admissible_pairs`] order.
    pub fn from_admissible(
        n_vars: usize,
        values: &[f64],
        source: EstimateSource,
    ) -> Result<Self, GraphError> {
        if values.len() != n_admissible(n_vars) {
            return Err(GraphError::DimensionMismatch(
                values.len(),
                n_admissible(n_vars),
            ));
        }
        let mut w = Array2::zeros((n_vars, n_vars));
        for ((i, j), &v) in admissible_pairs(n_vars).zip(values) {
            w[[i, j]] = v;
        }
        Self::new(w, source)
    }

    pub fn n_vars(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn source(&self) -> EstimateSource {
        self.source
    }

    pub fn admissible_values(&self) -> Vec<f64> {
        admissible_pairs(self.n_vars())
            .map(|(i, j)| self.weights[[i, j]])
            .collect()
    }
}

/// Checks a 0/1 matrix against the time order.
pub fn validate_structure(adj: &Array2<f64>) -> Result<CausalStructure, GraphError> {
    let (rows, cols) = adj.dim();
    if rows != cols {
        return Err(GraphError::NonSquare { rows, cols });
    }
    if rows == 0 {
        return Err(GraphError::Empty);
    }
    let mut out = CausalStructure::empty(rows);
    for ((i, j), &v) in adj.indexed_iter() {
        let set = if v == 1.0 {
            true
        } else if v == 0.0 {
            false
        } else {
            return Err(GraphError::NonBinaryEntry {
                row: i + 1,
                col: j + 1,
                value: v.to_string(),
            });
        };
        if set {
            if j >= i {
                return Err(GraphError::TimeOrderViolation(i + 1, j + 1));
            }
            out.set_edge(i, j, true);
        }
    }
    Ok(out)
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Edge iff weight is strictly above `threshold`.
pub fn binarize(est: &AdjacencyEstimate, threshold: f64) -> CausalStructure {
    let n = est.n_vars();
    let mut out = CausalStructure::empty(n);
    for (i, j) in admissible_pairs(n) {
        if est.weights[[i, j]] > threshold {
            out.set_edge(i, j, true);
        }
    }
    out
}

pub fn hamming_distance(a: &CausalStructure, b: &CausalStructure) -> Result<usize, GraphError> {
    if a.n_vars != b.n_vars {
        return Err(GraphError::DimensionMismatch(a.n_vars, b.n_vars));
    }
    Ok(admissible_pairs(a.n_vars)
        .filter(|&(i, j)| a.has_edge(i, j) != b.has_edge(i, j))
        .count())
}

/// Set of variables whose parent sets are emptied by a general intervention.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InterventionView {
    targets: Vec<usize>,
}

impl InterventionView {
    /// Targets are 0-based; they are stored sorted.
    pub fn new(mut targets: Vec<usize>) -> Result<Self, GraphError> {
        if targets.is_empty() {
            return Err(GraphError::EmptyView);
        }
        targets.sort_unstable();
        if let Some(w) = targets.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateTarget(w[0] + 1));
        }
        Ok(Self { targets })
    }

    pub fn single(target: usize) -> Self {
        Self {
            targets: vec![target],
        }
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn arity(&self) -> usize {
        self.targets.len()
    }

    pub fn contains(&self, var: usize) -> bool {
        self.targets.binary_search(&var).is_ok()
    }

    pub fn check_range(&self, n_vars: usize) -> Result<(), GraphError> {
        match self.targets.last() {
            Some(&t) if t >= n_vars => Err(GraphError::IndexOutOfRange {
                index: t + 1,
                n_vars,
            }),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for InterventionView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.targets.iter().map(|t| format!("x{}", t + 1)).collect();
        write!(f, "do({})", names.join(","))
    }
}

impl Serialize for InterventionView {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let one_based: Vec<usize> = self.targets.iter().map(|t| t + 1).collect();
        one_based.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for InterventionView {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<usize>::deserialize(deserializer)?;
        if raw.contains(&0) {
            return Err(serde::de::Error::custom("view targets are 1-based"));
        }
        InterventionView::new(raw.into_iter().map(|t| t - 1).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// All `C(n_vars, arity)` target sets in lexicographic order.
pub fn enumerate_interventions(
    n_vars: usize,
    arity: usize,
) -> Result<Vec<InterventionView>, GraphError> {
    if arity == 0 || arity > n_vars {
        return Err(GraphError::ArityOutOfRange { n_vars, arity });
    }
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..arity).collect();
    loop {
        out.push(InterventionView {
            targets: combo.clone(),
        });
        // Advance to the next combination in lexicographic order.
        let mut pos = arity;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if combo[pos] < n_vars - arity + pos {
                break;
            }
        }
        combo[pos] += 1;
        for k in pos + 1..arity {
            combo[k] = combo[k - 1] + 1;
        }
    }
}

/// Uniform subset of `round(fraction * len)` views, kept in their original order.
pub fn sample_intervention_subset(
    views: &[InterventionView],
    fraction: f64,
    seed: u64,
) -> Vec<InterventionView> {
    let fraction = fraction.clamp(0.0, 1.0);
    let k = (fraction * views.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, views.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| views[i].clone()).collect()
}
