//! Evaluation metrics and seed aggregation.
//!
//! All matrix metrics look at admissible entries only; the rest are zero by
//! construction and would only inflate agreement.

use crate::graph::{admissible_pairs, AdjacencyEstimate, CausalStructure, GraphError};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("AUROC needs both positive and negative labels")]
    SingleClass,
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Mann-Whitney AUROC with ties counted one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based, tie-averaged) ranks of the positives, doubled to stay integral.
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let twice_avg_rank = (start + 1 + end) as u64;
        let pos_in_group = order[start..end].iter().filter(|&&k| labels[k]).count() as u64;
        twice_rank_sum += twice_avg_rank * pos_in_group;
        start = end;
    }
    let p = n_pos as u64;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// AUROC with the single-class case mapped to chance level.
pub fn auroc_or_chance(scores: &[f64], labels: &[bool]) -> f64 {
    auroc(scores, labels).unwrap_or(0.5)
}

/// Edge-level confusion counts over admissible entries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn between(pred: &CausalStructure, truth: &CausalStructure) -> Result<Self, MetricError> {
        if pred.n_vars() != truth.n_vars() {
            return Err(GraphError::DimensionMismatch(pred.n_vars(), truth.n_vars()).into());
        }
        let mut c = Confusion::default();
        for (i, j) in admissible_pairs(pred.n_vars()) {
            match (pred.has_edge(i, j), truth.has_edge(i, j)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        Ok(c)
    }

    pub fn add(&mut self, other: Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// `2PR / (P + R)`, zero when undefined.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if self.tp == 0 || denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub fn f1(pred: &CausalStructure, truth: &CausalStructure) -> Result<f64, MetricError> {
    Ok(Confusion::between(pred, truth)?.f1())
}

/// Mean squared difference between the two paths' admissible entries.
pub fn inconsistency(a_s: &AdjacencyEstimate, a_r: &AdjacencyEstimate) -> Result<f64, MetricError> {
    if a_s.n_vars() != a_r.n_vars() {
        return Err(GraphError::DimensionMismatch(a_s.n_vars(), a_r.n_vars()).into());
    }
    let (s, r) = (a_s.admissible_values(), a_r.admissible_values());
    if s.is_empty() {
        return Ok(0.0);
    }
    Ok(s.iter()
        .zip(&r)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / s.len() as f64)
}

/// Causal edit distance: disagreeing entries over the full matrix.
pub fn c_dis(pred: &CausalStructure, truth: &CausalStructure) -> Result<usize, MetricError> {
    let n = pred.n_vars();
    if n != truth.n_vars() {
        return Err(GraphError::DimensionMismatch(n, truth.n_vars()).into());
    }
    let mut count = 0;
    for i in 0..n {
        for j in 0..n {
            if pred.has_edge(i, j) != truth.has_edge(i, j) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// One reported quantity: mean, optional 95% half-width, and the raw per-seed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub mean: f64,
    pub ci95: Option<f64>,
    pub per_seed: Vec<f64>,
}

impl Metric {
    pub fn single(v: f64) -> Self {
        Self {
            mean: v,
            ci95: None,
            per_seed: vec![v],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        let (mean, ci95) = mean_ci95(&values);
        Self {
            mean,
            ci95,
            per_seed: values,
        }
    }
}

/// Mean and t-distribution 95% half-width (absent below two values).
pub fn mean_ci95(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    (mean, Some(t * var.sqrt() / (n as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureMetrics {
    pub auroc: Metric,
    pub hd_mean: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationMetrics {
    pub auroc: Metric,
    pub f1: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyMetrics {
    /// AUROC of representation-path scores against binarized structure-path edges.
    pub auroc: Metric,
    pub one_minus_mse: Metric,
    pub inco_mse: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stru: StructureMetrics,
    pub rep: RepresentationMetrics,
    pub consistency: ConsistencyMetrics,
}

/// Plain per-run values, the input to an [`EvalReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalValues {
    pub stru_auroc: f64,
    pub stru_hd: f64,
    pub rep_auroc: f64,
    pub rep_f1: f64,
    pub cons_auroc: f64,
    pub inco_mse: f64,
}

impl EvalValues {
    /// Names and values in the column order used by every CSV export.
    pub fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("stru_auroc", self.stru_auroc),
            ("stru_hd", self.stru_hd),
            ("rep_auroc", self.rep_auroc),
            ("rep_f1", self.rep_f1),
            ("cons_auroc", self.cons_auroc),
            ("cons_one_minus_mse", 1.0 - self.inco_mse),
            ("inco_mse", self.inco_mse),
        ]
    }
}

impl From<EvalValues> for EvalReport {
    fn from(v: EvalValues) -> Self {
        EvalReport {
            stru: StructureMetrics {
                auroc: Metric::single(v.stru_auroc),
                hd_mean: Metric::single(v.stru_hd),
            },
            rep: RepresentationMetrics {
                auroc: Metric::single(v.rep_auroc),
                f1: Metric::single(v.rep_f1),
            },
            consistency: ConsistencyMetrics {
                auroc: Metric::single(v.cons_auroc),
                one_minus_mse: Metric::single(1.0 - v.inco_mse),
                inco_mse: Metric::single(v.inco_mse),
            },
        }
    }
}

impl EvalReport {
    fn metrics(&self) -> [&Metric; 7] {
        [
            &self.stru.auroc,
            &self.stru.hd_mean,
            &self.rep.auroc,
            &self.rep.f1,
            &self.consistency.auroc,
            &self.consistency.one_minus_mse,
            &self.consistency.inco_mse,
        ]
    }

    /// Table-style CSV: a header row, a mean row, and a CI row.
    pub fn to_csv(&self) -> String {
        let header = "structure_auroc,structure_hd,representation_auroc,representation_f1,consistency_auroc,consistency_one_minus_mse,inco_mse";
        let m = self.metrics();
        let means: Vec<String> = m.iter().map(|x| format!("{:.6}", x.mean)).collect();
        let cis: Vec<String> = m
            .iter()
            .map(|x| x.ci95.map(|c| format!("{c:.6}")).unwrap_or_default())
            .collect();
        format!(
            "stat,{header}\nmean,{}\nci95,{}\n",
            means.join(","),
            cis.join(",")
        )
    }
}

/// Pools per-seed reports into means with 95% t-intervals.
pub fn aggregate(reports: &[EvalReport]) -> EvalReport {
    let pool = |pick: fn(&EvalReport) -> &Metric| {
        Metric::from_values(
            reports
                .iter()
                .flat_map(|r| pick(r).per_seed.iter().copied())
                .collect(),
        )
    };
    EvalReport {
        stru: StructureMetrics {
            auroc: pool(|r| &r.stru.auroc),
            hd_mean: pool(|r| &r.stru.hd_mean),
        },
        rep: RepresentationMetrics {
            auroc: pool(|r| &r.rep.auroc),
            f1: pool(|r| &r.rep.f1),
        },
        consistency: ConsistencyMetrics {
            auroc: pool(|r| &r.consistency.auroc),
            one_minus_mse: pool(|r| &r.consistency.one_minus_mse),
            inco_mse: pool(|r| &r.consistency.inco_mse),
        },
    }
}
