//! Command-line entry point.
//!
//! Every subcommand reads an optional JSON config document (`--config`).
//! Values come from, in increasing precedence: built-in defaults, the config
//! file, then command-line flags.

mod commands;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "indefinite",
    version,
    about = "Intervention-consistent causal discovery on indefinite data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config document for the subcommand.
    #[arg(long, global = true, visible_alias = "spec")]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output file (output directory for `sweep`). Without it results go to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a multi-structure dataset from a dataset spec.
    GenData,
    /// Train a learner and write its report.
    Train {
        #[arg(long)]
        data: PathBuf,
    },
    /// Evaluate one or more trained reports, pooling them as seeds.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        params: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Run a restartable parameter sweep.
    Sweep,
    /// Compare strength-set equivalence with simulated interventional distributions.
    VerifyAbstraction,
    /// Run the iterative instruction loop on dialogues.
    LlmLoop {
        /// JSON array of dialogues; synthetic dialogues are used when absent.
        #[arg(long)]
        dialogues: Option<PathBuf>,
        #[arg(long, value_enum)]
        oracle: Option<commands::OracleKind>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        arity: Option<usize>,
    },
    /// Finite-difference check of the learner gradients.
    GradCheck,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) if e.is::<commands::UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
