//! Resolution of a run's settings: built-in defaults, then the config file,
//! then flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use cothought_core::{LoopConfig, TaskMode};

use crate::args::{BackendKind, RunArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopOverrides {
    pub tau: Option<f64>,
    pub max_iters: Option<usize>,
    pub oscillation_window: Option<usize>,
    pub oscillation_similarity: Option<f64>,
    pub transport_retries: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteSettings {
    pub chat_model: Option<String>,
    pub image_model: Option<String>,
    /// e.g. `1024x1024`
    pub image_size: Option<String>,
    pub timeout_secs: Option<f64>,
    pub temperature: Option<f64>,
}

/// The JSON config file. Field names follow the flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub task: Option<String>,
    pub query: Option<String>,
    pub mode: Option<TaskMode>,
    pub backend: Option<BackendKind>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub fault: Option<usize>,
    /// Side length of synthetic renders, in pixels.
    pub image_size: Option<u32>,
    #[serde(rename = "loop")]
    pub loop_config: LoopOverrides,
    pub remote: RemoteSettings,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Task(String),
    Query(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub target: Target,
    pub mode: Option<TaskMode>,
    pub backend: BackendKind,
    pub config: LoopConfig,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub faults: usize,
    pub image_size: u32,
    pub remote: RemoteSettings,
}

pub const DEFAULT_IMAGE_SIZE: u32 = 256;

pub fn resolve_run_spec(args: &RunArgs, file: ConfigFile) -> CliResult<RunSpec> {
    let target = match (&args.task, &args.query, file.task, file.query) {
        (Some(t), _, _, _) => Target::Task(t.clone()),
        (None, Some(q), _, _) => Target::Query(q.clone()),
        (None, None, Some(t), None) => Target::Task(t),
        (None, None, None, Some(q)) => Target::Query(q),
        (None, None, Some(_), Some(_)) => {
            return Err(CliError::Usage("config sets both task and query".into()))
        }
        (None, None, None, None) => {
            return Err(CliError::Usage("one of --task or --query is required".into()))
        }
    };
    if matches!(&target, Target::Task(t) | Target::Query(t) if t.trim().is_empty()) {
        return Err(CliError::Usage("task or query must not be empty".into()));
    }

    let mut config = LoopConfig::default();
    let l = &file.loop_config;
    config.tau = args.tau.or(l.tau).unwrap_or(config.tau);
    config.max_iters = args.max_iters.or(l.max_iters).unwrap_or(config.max_iters);
    config.oscillation_window = l.oscillation_window.unwrap_or(config.oscillation_window);
    config.oscillation_similarity = l.oscillation_similarity.unwrap_or(config.oscillation_similarity);
    config.transport_retries = l.transport_retries.unwrap_or(config.transport_retries);
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let image_size = file.image_size.unwrap_or(DEFAULT_IMAGE_SIZE);
    if image_size == 0 {
        return Err(CliError::Usage("image_size must be positive".into()));
    }
    Ok(RunSpec {
        target,
        mode: args.mode.map(TaskMode::from).or(file.mode),
        backend: args.backend.or(file.backend).unwrap_or(BackendKind::Synthetic),
        config,
        out: args.shared.out.clone().or(file.out),
        seed: args.seed.or(file.seed).unwrap_or(0),
        faults: args.fault.or(file.fault).unwrap_or(0),
        image_size,
        remote: file.remote,
    })
}
