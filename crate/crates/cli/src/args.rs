use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use cothought_core::TaskMode;

#[derive(Debug, Parser)]
#[command(name = "cothought", version, about = "Run, replay and inspect plan-simulate-critique loops")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one query through the loop and store its trajectory.
    Run(RunArgs),
    /// Re-read a stored run; with --rescore, re-score it with the oracle.
    Replay(ReplayArgs),
    /// Print a stored run's step table and outcome.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Shared {
    /// JSON config file; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Emit one JSON object on stdout instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Synthetic,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(alias = "question_answering", alias = "question-answering")]
    Qa,
    #[value(alias = "visual_generation", alias = "visual-generation")]
    Generation,
}

impl From<ModeArg> for TaskMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Qa => TaskMode::QuestionAnswering,
            ModeArg::Generation => TaskMode::VisualGeneration,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Task-library key, e.g. fig2-square-cuts.
    #[arg(long, conflicts_with = "query")]
    pub task: Option<String>,
    /// Free-text query.
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Convergence threshold; a step converges when its score is strictly above.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inject faults into the synthetic planner, as k=N.
    #[arg(long, value_name = "k=N", value_parser = parse_fault)]
    pub fault: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ReplayArgs {
    /// Run directory (defaults to --out).
    pub run_dir: Option<PathBuf>,
    #[command(flatten)]
    pub shared: Shared,
    /// Re-score stored scenes with the oracle critic and compare.
    #[arg(long)]
    pub rescore: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct InspectArgs {
    /// Run directory (defaults to --out).
    pub run_dir: Option<PathBuf>,
    #[command(flatten)]
    pub shared: Shared,
}

pub fn parse_fault(raw: &str) -> Result<usize, String> {
    let n = raw
        .strip_prefix("k=")
        .ok_or_else(|| format!("expected k=N, got {raw:?}"))?;
    n.parse()
        .map_err(|_| format!("fault count must be a non-negative integer, got {n:?}"))
}
