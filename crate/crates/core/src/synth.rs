//! Synthetic multi-structure datasets with vector-valued variables.

use crate::graph::{admissible_pairs, n_admissible, CausalStructure};
use crate::scm::solve_unit_lower;
use ndarray::Array2;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Uniform};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error(
        "cannot draw {requested} distinct structures over {n_vars} variables (at most {capacity})"
    )]
    CapacityExceeded {
        requested: usize,
        n_vars: usize,
        capacity: u128,
    },
    #[error(
        "gave up drawing distinct structures after {0} attempts; raise or lower the edge density"
    )]
    GenerationStalled(usize),
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
}

const TRAIN_FRACTION: f64 = 0.7;
const VALID_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub n_structures: usize,
    pub n_vars: usize,
    pub dim: usize,
    pub n_samples: usize,
    pub edge_density: f64,
    pub weight_range: [f64; 2],
    pub noise_std: f64,
    pub seed: u64,
    /// Relative structure frequencies; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure_weights: Option<Vec<f64>>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_structures: 5,
            n_vars: 4,
            dim: 16,
            n_samples: 1000,
            edge_density: 0.5,
            weight_range: [0.5, 1.0],
            noise_std: 1.0,
            seed: 7,
            structure_weights: None,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: &str| Err(DataError::InvalidSpec(msg.to_string()));
        if self.n_structures < 2 {
            return bad("n_structures must be greater than 1");
        }
        if self.n_vars < 2 {
            return bad("n_vars must be at least 2");
        }
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.n_samples < self.n_structures {
            return bad("n_samples must cover every structure at least once");
        }
        if !(self.edge_density > 0.0 && self.edge_density <= 1.0) {
            return bad("edge_density must lie in (0, 1]");
        }
        let [lo, hi] = self.weight_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad("weight_range must satisfy 0 < lo <= hi <= 1");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be finite and non-negative");
        }
        if let Some(w) = &self.structure_weights {
            if w.len() != self.n_structures || w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return bad("structure_weights needs one positive weight per structure");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndefiniteSample {
    pub x: Array2<f64>,
    /// Noise that generated `x`.
    pub e: Array2<f64>,
    /// 0-based index into the dataset's structures.
    pub structure_id: usize,
    pub truth: CausalStructure,
    pub truth_weights: Array2<f64>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndefiniteDataset {
    pub spec: DatasetSpec,
    pub structures: Vec<CausalStructure>,
    pub samples: Vec<IndefiniteSample>,
}

impl IndefiniteDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &IndefiniteSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn n_vars(&self) -> usize {
        self.spec.n_vars
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }
}

fn capacity(n_vars: usize) -> u128 {
    let bits = n_admissible(n_vars);
    if bits >= 127 {
        u128::MAX
    } else {
        1u128 << bits
    }
}

/// `m` pairwise-distinct DAGs, each admissible entry on with probability `density`.
pub fn generate_structures<R: Rng + ?Sized>(
    m: usize,
    n_vars: usize,
    density: f64,
    rng: &mut R,
) -> Result<Vec<CausalStructure>, DataError> {
    let cap = capacity(n_vars);
    if m as u128 > cap {
        return Err(DataError::CapacityExceeded {
            requested: m,
            n_vars,
            capacity: cap,
        });
    }
    let max_attempts = 10_000 * m.max(1);
    let mut seen = HashSet::with_capacity(m);
    let mut out = Vec::with_capacity(m);
    let mut attempts = 0;
    while out.len() < m {
        if attempts == max_attempts {
            return Err(DataError::GenerationStalled(attempts));
        }
        attempts += 1;
        let mut s = CausalStructure::empty(n_vars);
        for (i, j) in admissible_pairs(n_vars) {
            if rng.random::<f64>() < density {
                s.set_edge(i, j, true);
            }
        }
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    Ok(out)
}

fn split_for(index: usize, n: usize) -> Split {
    let train_end = (TRAIN_FRACTION * n as f64).round() as usize;
    let valid_end = ((TRAIN_FRACTION + VALID_FRACTION) * n as f64).round() as usize;
    if index < train_end {
        Split::Train
    } else if index < valid_end {
        Split::Valid
    } else {
        Split::Test
    }
}

pub fn sample_dataset(spec: &DatasetSpec) -> Result<IndefiniteDataset, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let structures =
        generate_structures(spec.n_structures, spec.n_vars, spec.edge_density, &mut rng)?;

    let uniform_weights = vec![1.0; spec.n_structures];
    let picker = WeightedIndex::new(
        spec.structure_weights
            .as_deref()
            .unwrap_or(&uniform_weights),
    )
    .map_err(|e| DataError::InvalidSpec(e.to_string()))?;
    // Redraw the whole assignment until every structure is represented.
    let mut assignment;
    let mut tries = 0;
    loop {
        assignment = (0..spec.n_samples)
            .map(|_| picker.sample(&mut rng))
            .collect::<Vec<_>>();
        let covered: HashSet<usize> = assignment.iter().copied().collect();
        if covered.len() == spec.n_structures {
            break;
        }
        tries += 1;
        if tries == 1000 {
            return Err(DataError::InvalidSpec(
                "n_samples too small to cover every structure".into(),
            ));
        }
    }

    let [lo, hi] = spec.weight_range;
    let weight_dist =
        Uniform::new_inclusive(lo, hi).map_err(|e| DataError::InvalidSpec(e.to_string()))?;
    let noise =
        Normal::new(0.0, spec.noise_std).map_err(|e| DataError::InvalidSpec(e.to_string()))?;
    let (n, d) = (spec.n_vars, spec.dim);

    let samples = assignment
        .into_iter()
        .enumerate()
        .map(|(idx, m)| {
            let truth = structures[m].clone();
            let mut w = Array2::zeros((n, n));
            for (i, j) in truth.edges() {
                w[[i, j]] = weight_dist.sample(&mut rng);
            }
            let e = Array2::from_shape_simple_fn((n, d), || noise.sample(&mut rng));
            let x = solve_unit_lower(w.view(), e.view());
            IndefiniteSample {
                x,
                e,
                structure_id: m,
                truth,
                truth_weights: w,
                split: split_for(idx, spec.n_samples),
            }
        })
        .collect();

    Ok(IndefiniteDataset {
        spec: spec.clone(),
        structures,
        samples,
    })
}

#[derive(Serialize, Deserialize)]
struct SampleJson {
    /// 1-based structure index.
    m: usize,
    x: Vec<Vec<f64>>,
    e: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    split: Split,
}

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    spec: DatasetSpec,
    structures: Vec<CausalStructure>,
    samples: Vec<SampleJson>,
}

pub(crate) fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], shape: (usize, usize)) -> Option<Array2<f64>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return None;
    }
    Array2::from_shape_vec(shape, rows.concat()).ok()
}

pub fn to_json(ds: &IndefiniteDataset) -> String {
    let doc = DatasetJson {
        spec: ds.spec.clone(),
        structures: ds.structures.clone(),
        samples: ds
            .samples
            .iter()
            .map(|s| SampleJson {
                m: s.structure_id + 1,
                x: matrix_to_rows(&s.x),
                e: matrix_to_rows(&s.e),
                weights: matrix_to_rows(&s.truth_weights),
                split: s.split,
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("dataset serializes")
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> DataError {
    DataError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

pub fn from_json(text: &str) -> Result<IndefiniteDataset, DataError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: DatasetJson = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })?;
    doc.spec
        .validate()
        .map_err(|e| schema("spec", e.to_string()))?;
    let (n, d) = (doc.spec.n_vars, doc.spec.dim);
    if doc.structures.len() != doc.spec.n_structures {
        return Err(schema(
            "structures",
            "length differs from spec.n_structures",
        ));
    }
    for (k, s) in doc.structures.iter().enumerate() {
        if s.n_vars() != n {
            return Err(schema(
                format!("structures[{k}].n_vars"),
                "differs from spec.n_vars",
            ));
        }
    }
    let mut samples = Vec::with_capacity(doc.samples.len());
    for (k, s) in doc.samples.into_iter().enumerate() {
        if s.m == 0 || s.m > doc.structures.len() {
            return Err(schema(
                format!("samples[{k}].m"),
                "structure index out of range",
            ));
        }
        let x = rows_to_matrix(&s.x, (n, d)).ok_or_else(|| {
            schema(
                format!("samples[{k}].x"),
                format!("expected {n}x{d} matrix"),
            )
        })?;
        let e = rows_to_matrix(&s.e, (n, d)).ok_or_else(|| {
            schema(
                format!("samples[{k}].e"),
                format!("expected {n}x{d} matrix"),
            )
        })?;
        let w = rows_to_matrix(&s.weights, (n, n)).ok_or_else(|| {
            schema(
                format!("samples[{k}].weights"),
                format!("expected {n}x{n} matrix"),
            )
        })?;
        let truth = doc.structures[s.m - 1].clone();
        for ((i, j), &v) in w.indexed_iter() {
            if (v != 0.0) != (j < i && truth.has_edge(i, j)) {
                return Err(schema(
                    format!("samples[{k}].weights[{i}][{j}]"),
                    "weight support disagrees with the structure",
                ));
            }
        }
        samples.push(IndefiniteSample {
            x,
            e,
            structure_id: s.m - 1,
            truth,
            truth_weights: w,
            split: s.split,
        });
    }
    Ok(IndefiniteDataset {
        spec: doc.spec,
        structures: doc.structures,
        samples,
    })
}

pub fn save_dataset(ds: &IndefiniteDataset, path: &Path) -> Result<(), DataError> {
    crate::io::write_atomic(path, to_json(ds).as_bytes()).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_dataset(path: &Path) -> Result<IndefiniteDataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text)
}
