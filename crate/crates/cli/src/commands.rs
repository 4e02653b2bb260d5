use crate::{Cli, Command, SplitArg};
use anyhow::{Context, Result};
use clap::ValueEnum;
use indefinite_core::abstraction::{run_ccc, CccConfig};
use indefinite_core::experiment::{run_sweep, ExperimentConfig};
use indefinite_core::io::write_atomic;
use indefinite_core::learner::{evaluate, grad_check, train, GradCheckConfig};
use indefinite_core::llm::{
    run_loop, synthetic_dialogues, Dialogue, HttpOracle, LlmOracle, LoopOutcome, MockOracle,
    MockOracleConfig, Supervision,
};
use indefinite_core::metrics::{aggregate, EvalReport};
use indefinite_core::synth::{load_dataset, sample_dataset, to_json};
use indefinite_core::{DatasetSpec, Split, TrainConfig, TrainReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Bad invocation detected after argument parsing; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("configuring worker threads")?;
    }
    match &cli.command {
        Command::GenData => gen_data(&cli),
        Command::Train { data } => train_cmd(&cli, data),
        Command::Eval {
            data,
            params,
            split,
        } => eval_cmd(&cli, data, params, *split),
        Command::Sweep => sweep(&cli),
        Command::VerifyAbstraction => verify_abstraction(&cli),
        Command::LlmLoop {
            dialogues,
            oracle,
            max_iters,
            arity,
        } => llm_loop(&cli, dialogues.as_deref(), *oracle, *max_iters, *arity),
        Command::GradCheck => grad_check_cmd(&cli),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).with_context(|| format!("parsing {}", path.display()))
}

fn load_config<T: DeserializeOwned + Default>(cli: &Cli) -> Result<T> {
    cli.config
        .as_deref()
        .map(read_json)
        .transpose()
        .map(Option::unwrap_or_default)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn gen_data(cli: &Cli) -> Result<ExitCode> {
    let mut spec: DatasetSpec = load_config(cli)?;
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    let ds = sample_dataset(&spec)?;
    emit(cli.out.as_deref(), &to_json(&ds))?;
    eprintln!(
        "{} samples, {} structures",
        ds.samples.len(),
        ds.structures.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn train_cmd(cli: &Cli, data: &Path) -> Result<ExitCode> {
    let mut cfg: TrainConfig = load_config(cli)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let ds = load_dataset(data)?;
    let report = train(&ds, &cfg)?;
    if let Some(out) = &cli.out {
        let csv = out.with_extension("csv");
        write_atomic(&csv, report.to_csv().as_bytes())
            .with_context(|| format!("writing {}", csv.display()))?;
    }
    emit(cli.out.as_deref(), &pretty(&report))?;
    if let Some(last) = report.series.last() {
        eprintln!(
            "epoch {} kept of {}: stru_auroc {:.4} rep_auroc {:.4} inco_mse {:.4}",
            report.best_epoch.unwrap_or(0),
            last.epoch,
            last.stru_auroc,
            last.rep_auroc,
            last.inco_mse
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn eval_cmd(cli: &Cli, data: &Path, params: &[PathBuf], split: SplitArg) -> Result<ExitCode> {
    let ds = load_dataset(data)?;
    let split = match split {
        SplitArg::Train => Split::Train,
        SplitArg::Valid => Split::Valid,
        SplitArg::Test => Split::Test,
    };
    let reports: Vec<EvalReport> = params
        .iter()
        .map(|p| -> Result<EvalReport> {
            let r: TrainReport = read_json(p)?;
            Ok(evaluate(&r.params, ds.split(split)).into())
        })
        .collect::<Result<_>>()?;
    let pooled = aggregate(&reports);
    if let Some(out) = &cli.out {
        let csv = out.with_extension("csv");
        write_atomic(&csv, pooled.to_csv().as_bytes())
            .with_context(|| format!("writing {}", csv.display()))?;
    }
    emit(cli.out.as_deref(), &pretty(&pooled))?;
    eprint!("{}", pooled.to_csv());
    Ok(ExitCode::SUCCESS)
}

fn sweep(cli: &Cli) -> Result<ExitCode> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| UsageError("sweep requires --config".into()))?;
    let mut cfg: ExperimentConfig = read_json(path)?;
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    let table = run_sweep(&cfg)?;
    let failed: Vec<_> = table.rows.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        eprintln!(
            "point {} = {} seed {} failed: {}",
            cfg.axis,
            r.axis_value,
            r.seed,
            r.error.as_deref().unwrap_or("")
        );
    }
    eprintln!(
        "{} grid points, {} failed; results in {}",
        table.rows.len(),
        failed.len(),
        cfg.out_dir.display()
    );
    Ok(if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn verify_abstraction(cli: &Cli) -> Result<ExitCode> {
    let mut cfg: CccConfig = load_config(cli)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let report = run_ccc(&cfg)?;
    emit(cli.out.as_deref(), &pretty(&report))?;
    eprintln!(
        "agreement {}/{}; reference pair: {:?} at arity 1, {:?} at arity 2",
        report.agreements,
        report.trials.len(),
        report.fig7_arity1,
        report.fig7_arity2
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    /// Simulated answerer that also re-answers reduced dialogues.
    #[default]
    Mock,
    /// Simulated answerer checked against the labelled structure.
    Label,
    /// Remote completion endpoint from `LLM_ENDPOINT`.
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmLoopConfig {
    pub oracle: OracleKind,
    pub max_iters: usize,
    pub arity: usize,
    pub flip_prob: f64,
    pub initial_flips: Option<usize>,
    pub correction_prob: f64,
    pub seed: u64,
    /// Used when no dialogue file is given.
    pub synthetic_count: usize,
    pub synthetic_vars: usize,
    /// Optional second endpoint answering the reduced dialogues in http mode.
    pub second_endpoint: Option<String>,
}

impl Default for LlmLoopConfig {
    fn default() -> Self {
        Self {
            oracle: OracleKind::Mock,
            max_iters: 8,
            arity: 1,
            flip_prob: 0.0,
            initial_flips: Some(2),
            correction_prob: 1.0,
            seed: 0,
            synthetic_count: 20,
            synthetic_vars: 4,
            second_endpoint: None,
        }
    }
}

#[derive(Serialize)]
struct DialogueResult {
    index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<LoopOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct LlmLoopOutput {
    config: LlmLoopConfig,
    results: Vec<DialogueResult>,
    /// Mean F1 per iteration over labelled dialogues, each padded with its final value.
    mean_f1_trace: Vec<f64>,
}

fn loop_one(cfg: &LlmLoopConfig, d: &Dialogue, index: usize) -> Result<LoopOutcome> {
    let mock = |truth| -> Result<MockOracle> {
        Ok(MockOracle::new(
            d.clone(),
            MockOracleConfig {
                truth,
                flip_prob: cfg.flip_prob,
                initial_flips: cfg.initial_flips,
                correction_prob: cfg.correction_prob,
                seed: cfg.seed.wrapping_add(index as u64),
            },
        )?)
    };
    let need_truth = || {
        d.truth()
            .cloned()
            .ok_or_else(|| anyhow::anyhow!("dialogue {index} has no labelled structure"))
    };
    let outcome = match cfg.oracle {
        OracleKind::Mock => {
            let mut o = mock(need_truth()?)?;
            run_loop(d, &mut o, Supervision::Reanswer, cfg.max_iters, cfg.arity)?
        }
        OracleKind::Label => {
            let truth = need_truth()?;
            let mut o = mock(truth.clone())?;
            run_loop(
                d,
                &mut o,
                Supervision::Label(&truth),
                cfg.max_iters,
                cfg.arity,
            )?
        }
        OracleKind::Http => {
            let mut o = HttpOracle::from_env()?;
            match &cfg.second_endpoint {
                Some(url) => {
                    let mut second =
                        HttpOracle::new(url.clone(), std::env::var("LLM_API_KEY").ok());
                    let second: &mut dyn LlmOracle = &mut second;
                    run_loop(
                        d,
                        &mut o,
                        Supervision::Second(second),
                        cfg.max_iters,
                        cfg.arity,
                    )?
                }
                None => run_loop(d, &mut o, Supervision::Reanswer, cfg.max_iters, cfg.arity)?,
            }
        }
    };
    Ok(outcome)
}

fn llm_loop(
    cli: &Cli,
    dialogues: Option<&Path>,
    oracle: Option<OracleKind>,
    max_iters: Option<usize>,
    arity: Option<usize>,
) -> Result<ExitCode> {
    let mut cfg: LlmLoopConfig = load_config(cli)?;
    cfg.oracle = oracle.unwrap_or(cfg.oracle);
    cfg.max_iters = max_iters.unwrap_or(cfg.max_iters);
    cfg.arity = arity.unwrap_or(cfg.arity);
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    let dialogues: Vec<Dialogue> = match dialogues {
        Some(p) => read_json(p)?,
        None => synthetic_dialogues(cfg.synthetic_count, cfg.synthetic_vars, cfg.seed)?,
    };
    let results: Vec<DialogueResult> = dialogues
        .iter()
        .enumerate()
        .map(|(index, d)| match loop_one(&cfg, d, index) {
            Ok(o) => DialogueResult {
                index,
                outcome: Some(o),
                error: None,
            },
            Err(e) => DialogueResult {
                index,
                outcome: None,
                error: Some(format!("{e:#}")),
            },
        })
        .collect();
    let traces: Vec<Vec<f64>> = results
        .iter()
        .filter_map(|r| r.outcome.as_ref())
        .map(|o| o.f1_trace(cfg.max_iters.max(1)))
        .filter(|t| !t.is_empty())
        .collect();
    let mean_f1_trace: Vec<f64> = (0..cfg.max_iters.max(1))
        .map(|k| traces.iter().map(|t| t[k]).sum::<f64>() / traces.len() as f64)
        .filter(|v| v.is_finite())
        .collect();
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    let converged = results
        .iter()
        .filter(|r| r.outcome.as_ref().is_some_and(|o| o.converged))
        .count();
    for r in results.iter().filter(|r| r.error.is_some()) {
        eprintln!("dialogue {}: {}", r.index, r.error.as_deref().unwrap_or(""));
    }
    let out = LlmLoopOutput {
        config: cfg,
        results,
        mean_f1_trace,
    };
    emit(cli.out.as_deref(), &pretty(&out))?;
    let trace: Vec<String> = out
        .mean_f1_trace
        .iter()
        .map(|v| format!("{v:.3}"))
        .collect();
    eprintln!(
        "{converged}/{} converged, {failed} failed; mean F1 by iteration: {}",
        out.results.len(),
        trace.join(" ")
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn grad_check_cmd(cli: &Cli) -> Result<ExitCode> {
    let mut cfg: GradCheckConfig = load_config(cli)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let cells = grad_check(&cfg)?;
    let mut ok = true;
    for c in &cells {
        let pass = c.max_rel_error < cfg.tolerance;
        ok &= pass;
        eprintln!(
            "{} {:?} arity {} {}: max rel err {:.3e} over {} params",
            if pass { "PASS" } else { "FAIL" },
            c.metric,
            c.arity,
            if c.shared { "shared" } else { "per-view" },
            c.max_rel_error,
            c.n_params
        );
    }
    emit(cli.out.as_deref(), &pretty(&cells))?;
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}
