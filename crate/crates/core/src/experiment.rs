//! Restartable parameter sweeps and plot-data export.
//!
//! Every `(axis value, seed)` grid point writes its own
//! `point_{axis}_{value}_seed{seed}.json`; a rerun skips points whose file
//! already exists, and aggregate files are only rewritten when their bytes change.

use crate::io::{write_atomic, write_if_changed};
use crate::learner::{configured_views, evaluate, train, TrainConfig};
use crate::metrics::{mean_ci95, EvalValues};
use crate::synth::{
    load_dataset, sample_dataset, DataError, DatasetSpec, IndefiniteDataset, Split,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sweep table is empty")]
    EmptyTable,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    InterventionFraction,
    InterventionArity,
    TrainsetFraction,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::InterventionFraction => "intervention_fraction",
            SweepAxis::InterventionArity => "intervention_arity",
            SweepAxis::TrainsetFraction => "trainset_fraction",
        })
    }
}

impl SweepAxis {
    /// Training config with this axis set to `value`.
    pub fn apply(&self, base: &TrainConfig, value: f64) -> Result<TrainConfig, ExperimentError> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::InterventionFraction => cfg.intervention_fraction = value,
            SweepAxis::InterventionArity => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(ExperimentError::InvalidConfig(format!(
                        "arity {value} is not a positive integer"
                    )));
                }
                cfg.intervention_arity = value as usize;
            }
            SweepAxis::TrainsetFraction => cfg.train_fraction = value,
        }
        Ok(cfg)
    }
}

/// Generated per seed, or loaded once from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// The sweep seed is added to the spec's seed.
    Spec(DatasetSpec),
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub train: TrainConfig,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Grid points trained concurrently; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(ExperimentError::InvalidConfig(
                "at least one seed is required".into(),
            ));
        }
        if self.values.is_empty() {
            return Err(ExperimentError::InvalidConfig(
                "at least one axis value is required".into(),
            ));
        }
        // A dataset on disk is only checked against its size when loaded.
        let n_vars = match &self.dataset {
            DatasetSource::Spec(s) => s.n_vars,
            DatasetSource::Path(_) => usize::MAX,
        };
        for &v in &self.values {
            self.axis
                .apply(&self.train, v)?
                .validate(n_vars)
                .map_err(|e| ExperimentError::InvalidConfig(format!("{} = {v}: {e}", self.axis)))?;
        }
        Ok(())
    }
}

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub seed: u64,
    pub n_views: usize,
    pub values: Option<EvalValues>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

pub const LONG_HEADER: &str = "axis,axis_value,seed,metric,value";
pub const PLOT_HEADER: &str = "metric,axis_value,mean,ci_low,ci_high,n";

impl SweepTable {
    /// One line per (grid point, seed, metric); failed points contribute no lines.
    pub fn to_long_csv(&self) -> String {
        let mut out = format!("{LONG_HEADER}\n");
        for r in &self.rows {
            let Some(v) = &r.values else { continue };
            for (name, x) in v.named() {
                out.push_str(&format!(
                    "{},{},{},{name},{x:.9}\n",
                    self.axis, r.axis_value, r.seed
                ));
            }
            out.push_str(&format!(
                "{},{},{},n_views,{}\n",
                self.axis, r.axis_value, r.seed, r.n_views
            ));
        }
        out
    }
}

pub fn point_file_name(axis: SweepAxis, value: f64, seed: u64) -> String {
    format!("point_{axis}_{value}_seed{seed}.json")
}

fn dataset_for(
    source: &DatasetSource,
    seed: u64,
    cache: Option<&IndefiniteDataset>,
) -> Result<IndefiniteDataset, ExperimentError> {
    match (source, cache) {
        (_, Some(ds)) => Ok(ds.clone()),
        (DatasetSource::Spec(spec), None) => Ok(sample_dataset(&DatasetSpec {
            seed: spec.seed.wrapping_add(seed),
            ..spec.clone()
        })?),
        (DatasetSource::Path(p), None) => Ok(load_dataset(p)?),
    }
}

fn run_point(
    cfg: &ExperimentConfig,
    value: f64,
    seed: u64,
    cache: Option<&IndefiniteDataset>,
) -> SweepRow {
    let mut row = SweepRow {
        axis_value: value,
        seed,
        n_views: 0,
        values: None,
        error: None,
    };
    let result = (|| -> Result<(usize, EvalValues), String> {
        let ds = dataset_for(&cfg.dataset, seed, cache).map_err(|e| e.to_string())?;
        let mut tc = cfg
            .axis
            .apply(&cfg.train, value)
            .map_err(|e| e.to_string())?;
        tc.seed = seed;
        let n_views = configured_views(ds.n_vars(), &tc)
            .map_err(|e| e.to_string())?
            .len();
        let report = train(&ds, &tc).map_err(|e| e.to_string())?;
        Ok((n_views, evaluate(&report.params, ds.split(Split::Test))))
    })();
    match result {
        Ok((n, v)) => {
            row.n_views = n;
            row.values = Some(v);
        }
        Err(e) => row.error = Some(e),
    }
    row
}

/// Trains and evaluates every grid point not already on disk, then writes
/// `sweep.csv`, `plot.csv` and `plot.json` into the output directory.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepTable, ExperimentError> {
    cfg.validate()?;
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cache = match &cfg.dataset {
        DatasetSource::Path(p) => Some(load_dataset(p)?),
        DatasetSource::Spec(_) => None,
    };

    let grid: Vec<(f64, u64)> = cfg
        .values
        .iter()
        .flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
    let rows: Vec<Result<SweepRow, ExperimentError>> = pool.install(|| {
        grid.par_iter()
            .map(|&(value, seed)| {
                let path = dir.join(point_file_name(cfg.axis, value, seed));
                if let Ok(text) = std::fs::read_to_string(&path) {
                    if let Ok(row) = serde_json::from_str::<SweepRow>(&text) {
                        return Ok(row);
                    }
                }
                let row = run_point(cfg, value, seed, cache.as_ref());
                let bytes = serde_json::to_vec_pretty(&row).expect("row serializes");
                write_atomic(&path, &bytes).map_err(io_err(&path))?;
                Ok(row)
            })
            .collect()
    });
    let table = SweepTable {
        axis: cfg.axis,
        rows: rows.into_iter().collect::<Result<_, _>>()?,
    };

    let long = dir.join("sweep.csv");
    write_if_changed(&long, table.to_long_csv().as_bytes()).map_err(io_err(&long))?;
    if table.rows.iter().any(|r| r.values.is_some()) {
        let plot = emit_plot_data(&table)?;
        let csv = dir.join("plot.csv");
        write_if_changed(&csv, plot.to_csv().as_bytes()).map_err(io_err(&csv))?;
        let json = dir.join("plot.json");
        let text = serde_json::to_string_pretty(&plot).expect("plot serializes");
        write_if_changed(&json, text.as_bytes()).map_err(io_err(&json))?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub metric: String,
    pub axis_value: f64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub axis: SweepAxis,
    pub series: Vec<PlotPoint>,
}

impl PlotData {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{PLOT_HEADER}\n");
        for p in &self.series {
            out.push_str(&format!(
                "{},{},{:.9},{:.9},{:.9},{}\n",
                p.metric, p.axis_value, p.mean, p.ci_low, p.ci_high, p.n
            ));
        }
        out
    }

    /// Points of one metric, ordered by axis value.
    pub fn metric(&self, name: &str) -> Vec<&PlotPoint> {
        self.series.iter().filter(|p| p.metric == name).collect()
    }
}

/// Mean and 95% band per (metric, axis value) over the successful seeds.
/// A single seed gives a zero-width band.
pub fn emit_plot_data(table: &SweepTable) -> Result<PlotData, ExperimentError> {
    let mut groups: BTreeMap<(usize, u64), Vec<f64>> = BTreeMap::new();
    let mut names: Vec<&'static str> = Vec::new();
    for r in &table.rows {
        let Some(v) = &r.values else { continue };
        for (k, (name, x)) in v.named().into_iter().enumerate() {
            if names.len() <= k {
                names.push(name);
            }
            // Keyed on the bit pattern so axis values sort and group exactly.
            groups
                .entry((k, ordered_bits(r.axis_value)))
                .or_default()
                .push(x);
        }
    }
    if groups.is_empty() {
        return Err(ExperimentError::EmptyTable);
    }
    let series = groups
        .into_iter()
        .map(|((k, bits), xs)| {
            let (mean, ci) = mean_ci95(&xs);
            let half = ci.unwrap_or(0.0);
            PlotPoint {
                metric: names[k].to_string(),
                axis_value: from_ordered_bits(bits),
                mean,
                ci_low: mean - half,
                ci_high: mean + half,
                n: xs.len(),
            }
        })
        .collect();
    Ok(PlotData {
        axis: table.axis,
        series,
    })
}

/// Monotone map from f64 to u64 so that `BTreeMap` orders by value.
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_ordered_bits(b: u64) -> f64 {
    f64::from_bits(if b >> 63 == 1 { b & !(1 << 63) } else { !b })
}
