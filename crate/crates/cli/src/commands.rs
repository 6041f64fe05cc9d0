use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde_json::json;

use cothought_core::orchestrator::{Orchestrator, RunError};
use cothought_core::store::{
    load_run, now_rfc3339, BackendIds, LoadedRun, RunMeta, RunWriter, StepRecord, StoreError,
};
use cothought_core::synthetic::{
    CensusAnswerer, FaultSpec, OracleCritic, SceneSimulator, ScriptedPlanner, TaskLibrary,
};
use cothought_core::{
    Answerer, Backends, Critic, Outcome, Planner, Query, Simulator, TaskMode, TerminationReason,
};
use cothought_remote::{
    EndpointConfig, HttpClient, RemoteAnswerer, RemoteCritic, RemotePlanner, RemoteSimulator,
    DEFAULT_CHAT_MODEL, DEFAULT_IMAGE_MODEL,
};

use crate::args::{BackendKind, InspectArgs, ReplayArgs, RunArgs};
use crate::spec::{resolve_run_spec, CliError, CliResult, ConfigFile, RunSpec, Target};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_DEADLOCK: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

pub fn exit_code(reason: TerminationReason) -> i32 {
    match reason {
        TerminationReason::Converged => EXIT_CONVERGED,
        TerminationReason::BudgetExhausted => EXIT_BUDGET,
        TerminationReason::Deadlock => EXIT_DEADLOCK,
    }
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn out(stdout: &mut dyn Write, text: impl AsRef<str>) -> CliResult<()> {
    writeln!(stdout, "{}", text.as_ref()).map_err(failed)
}

struct Wired {
    query: Query,
    planner: Box<dyn Planner>,
    simulator: Box<dyn Simulator>,
    critic: Box<dyn Critic>,
    answerer: Box<dyn Answerer>,
    settings: serde_json::Value,
}

fn with_mode(query: Query, mode: Option<TaskMode>) -> CliResult<Query> {
    match mode {
        None => Ok(query),
        Some(m) => Ok(Query::new(query.id(), query.text(), m)
            .map_err(failed)?
            .with_hint(query.constraints_hint().map(str::to_owned))),
    }
}

fn wire_synthetic(spec: &RunSpec) -> CliResult<Wired> {
    let library = Arc::new(TaskLibrary::builtin());
    let task = match &spec.target {
        Target::Task(key) => library.get(key),
        Target::Query(text) => {
            let probe = Query::new("query", text.as_str(), TaskMode::QuestionAnswering)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            library.lookup(&probe)
        }
    };
    let Some(task) = task else {
        let known: Vec<&str> = library.tasks().iter().map(|t| t.key.as_str()).collect();
        return Err(CliError::Usage(format!(
            "no synthetic task matches {:?}; known tasks: {}",
            spec.target,
            known.join(", ")
        )));
    };
    let faults = FaultSpec {
        count: spec.faults,
        seed: spec.seed,
    };
    faults.plan(task).map_err(|e| CliError::Usage(e.to_string()))?;
    let query = with_mode(task.query().map_err(failed)?, spec.mode)?;
    let settings = json!({
        "backend": "synthetic",
        "task": task.key,
        "fault": spec.faults,
        "image_size": spec.image_size,
    });
    Ok(Wired {
        query,
        planner: Box::new(ScriptedPlanner::new(library.clone()).with_faults(Some(faults))),
        simulator: Box::new(SceneSimulator::new(spec.image_size, spec.image_size)),
        critic: Box::new(OracleCritic::new(library)),
        answerer: Box::new(CensusAnswerer),
        settings,
    })
}

fn wire_remote(spec: &RunSpec) -> CliResult<Wired> {
    if spec.faults > 0 {
        return Err(CliError::Usage("--fault applies to the synthetic backend only".into()));
    }
    let r = &spec.remote;
    let chat_model = r.chat_model.clone().unwrap_or_else(|| DEFAULT_CHAT_MODEL.into());
    let image_model = r.image_model.clone().unwrap_or_else(|| DEFAULT_IMAGE_MODEL.into());
    let mut chat = EndpointConfig::from_env(chat_model.as_str())
        .map_err(|e| CliError::Usage(format!("remote backend: {e}")))?;
    if let Some(secs) = r.timeout_secs {
        if !(secs.is_finite() && secs > 0.0) {
            return Err(CliError::Usage("remote.timeout_secs must be positive".into()));
        }
        chat = chat
            .with_timeout(Duration::from_secs_f64(secs))
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(t) = r.temperature {
        chat = chat.with_temperature(t).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut image_client = HttpClient::new(chat.clone().with_model(image_model.as_str()));
    if let Some(size) = &r.image_size {
        image_client = image_client.with_image_size(size.as_str());
    }
    let chat_client = HttpClient::new(chat);
    let (id, text) = match &spec.target {
        Target::Task(key) => match TaskLibrary::builtin().get(key) {
            Some(task) => (task.key.clone(), task.query_text.clone()),
            None => return Err(CliError::Usage(format!("unknown task {key:?}"))),
        },
        Target::Query(text) => ("query".to_string(), text.clone()),
    };
    let mode = spec.mode.unwrap_or(TaskMode::QuestionAnswering);
    let query = Query::new(id, text, mode).map_err(|e| CliError::Usage(e.to_string()))?;
    let settings = json!({
        "backend": "remote",
        "chat_model": chat_model,
        "image_model": image_model,
    });
    Ok(Wired {
        query,
        planner: Box::new(RemotePlanner::new(chat_client.clone())),
        simulator: Box::new(RemoteSimulator::new(image_client)),
        critic: Box::new(RemoteCritic::new(chat_client.clone())),
        answerer: Box::new(RemoteAnswerer::new(chat_client)),
        settings,
    })
}

fn default_run_dir(query: &Query) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let id: String = query
        .id()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    PathBuf::from("runs").join(format!("{id}-{stamp}"))
}

pub fn cmd_run(args: &RunArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let file = match &args.shared.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let spec = resolve_run_spec(args, file)?;
    let wired = match spec.backend {
        BackendKind::Synthetic => wire_synthetic(&spec)?,
        BackendKind::Remote => wire_remote(&spec)?,
    };
    let run_dir = spec.out.clone().unwrap_or_else(|| default_run_dir(&wired.query));
    let meta = RunMeta {
        query: wired.query.clone(),
        config: spec.config,
        backends: BackendIds {
            planner: wired.planner.id().into(),
            simulator: wired.simulator.id().into(),
            critic: wired.critic.id().into(),
            answerer: wired.answerer.id().into(),
        },
        started_at: now_rfc3339(),
        seed: Some(spec.seed),
        settings: wired.settings.clone(),
    };
    let mut writer = RunWriter::create(&run_dir, &meta).map_err(failed)?;
    let backends = Backends {
        planner: wired.planner.as_ref(),
        simulator: wired.simulator.as_ref(),
        critic: wired.critic.as_ref(),
        answerer: wired.answerer.as_ref(),
    };
    let result = Orchestrator::new(backends, spec.config)
        .with_seed(Some(spec.seed))
        .run_observed(&wired.query, &mut writer);
    drop(writer);
    let outcome = result.map_err(|e: RunError| {
        CliError::Failed(format!("run failed (partial trajectory in {}): {e}", run_dir.display()))
    })?;
    if args.shared.json {
        let run = load_run(&run_dir).map_err(failed)?;
        out(stdout, summary_json(&run_dir, &run).to_string())?;
    } else {
        match (outcome.answer(), outcome.deliverable()) {
            (Some(answer), _) => out(stdout, answer)?,
            (None, Some(_)) => out(
                stdout,
                run_dir.join(image_rel(outcome.best_step())).display().to_string(),
            )?,
            (None, None) => {}
        }
        out(stdout, summary_line(&outcome, &run_dir))?;
    }
    Ok(exit_code(outcome.reason()))
}

fn image_rel(step: usize) -> String {
    cothought_core::store::image_relpath(step)
}

fn summary_line(outcome: &Outcome, run_dir: &Path) -> String {
    let mut line = format!(
        "{}: best score {:.3} at step {}, {} step(s), run dir {}",
        outcome.reason(),
        outcome.best_score(),
        outcome.best_step(),
        outcome.trajectory().len(),
        run_dir.display()
    );
    if let Some(f) = outcome.failure() {
        line.push_str(&format!(" (stopped early: {f})"));
    }
    line
}

fn summary_json(run_dir: &Path, run: &LoadedRun) -> serde_json::Value {
    let outcome = run.outcome.as_ref();
    let reason = outcome.map(|o| o.reason());
    json!({
        "run_dir": run_dir,
        "query": run.meta.query,
        "reason": reason,
        "exit_code": reason.map(exit_code),
        "best_step": outcome.map(|o| o.best_step()),
        "best_score": outcome.map(|o| o.best_score()),
        "answer": outcome.and_then(|o| o.answer()),
        "deliverable": outcome
            .and_then(|o| o.deliverable().map(|_| run_dir.join(image_rel(o.best_step())))),
        "failure": outcome.and_then(|o| o.failure()),
        "steps": run.records,
    })
}

fn excerpt(text: &str, max: usize) -> String {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= max {
        flat
    } else {
        let cut: String = flat.chars().take(max.saturating_sub(3)).collect();
        format!("{cut}...")
    }
}

fn step_table(records: &[StepRecord]) -> Vec<String> {
    let mut rows = vec![format!("{:>3}  {:>6}  {:<48}  {}", "t", "score", "feedback", "image")];
    for r in records {
        let score = r.score.map_or_else(|| "-".to_string(), |s| format!("{s:.3}"));
        let feedback = r.feedback.as_deref().map_or_else(|| "-".to_string(), |f| excerpt(f, 48));
        let image = r.image_path.as_deref().unwrap_or("-");
        rows.push(format!("{:>3}  {:>6}  {:<48}  {}", r.step_index, score, feedback, image));
    }
    rows
}

fn outcome_line(outcome: Option<&Outcome>) -> String {
    let Some(o) = outcome else {
        return "outcome: none (run did not finish)".into();
    };
    let mut line = format!(
        "outcome: {} after {} step(s), best step {} (score {:.3})",
        o.reason(),
        o.trajectory().len(),
        o.best_step(),
        o.best_score()
    );
    if let Some(a) = o.answer() {
        line.push_str(&format!(", answer: {a}"));
    }
    if o.deliverable().is_some() {
        line.push_str(&format!(", deliverable: {}", image_rel(o.best_step())));
    }
    if let Some(f) = o.failure() {
        line.push_str(&format!(", failure: {f}"));
    }
    line
}

fn run_dir_arg(positional: &Option<PathBuf>, shared_out: &Option<PathBuf>) -> CliResult<PathBuf> {
    positional
        .clone()
        .or_else(|| shared_out.clone())
        .ok_or_else(|| CliError::Usage("a run directory is required".into()))
}

fn load(dir: &Path) -> CliResult<LoadedRun> {
    load_run(dir).map_err(|e: StoreError| CliError::Failed(format!("{}: {e}", dir.display())))
}

pub fn cmd_inspect(args: &InspectArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let dir = run_dir_arg(&args.run_dir, &args.shared.out)?;
    let run = load(&dir)?;
    if args.shared.json {
        out(stdout, summary_json(&dir, &run).to_string())?;
        return Ok(EXIT_CONVERGED);
    }
    out(stdout, format!("query: {} ({})", run.meta.query.text(), run.meta.query.mode()))?;
    for row in step_table(&run.records) {
        out(stdout, row)?;
    }
    out(stdout, outcome_line(run.outcome.as_ref()))?;
    Ok(EXIT_CONVERGED)
}

pub fn cmd_replay(args: &ReplayArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    let dir = run_dir_arg(&args.run_dir, &args.shared.out)?;
    let run = load(&dir)?;
    if !args.rescore {
        if args.shared.json {
            out(stdout, summary_json(&dir, &run).to_string())?;
        } else {
            for row in step_table(&run.records) {
                out(stdout, row)?;
            }
            out(stdout, outcome_line(run.outcome.as_ref()))?;
        }
        return Ok(EXIT_CONVERGED);
    }

    let scored: Vec<&StepRecord> = run.records.iter().filter(|r| r.score.is_some()).collect();
    let library = TaskLibrary::builtin();
    let task = library.lookup(&run.meta.query);
    if scored.is_empty() || scored.iter().any(|r| r.scene.is_none()) || task.is_none() {
        let reason = if task.is_none() && scored.iter().all(|r| r.scene.is_some()) {
            "rescore unavailable: query matches no synthetic task"
        } else {
            "rescore unavailable: no scene metadata"
        };
        out(stdout, reason)?;
        return Ok(EXIT_CONVERGED);
    }
    let task = task.expect("checked above");
    let mut mismatches = Vec::new();
    for r in &scored {
        let verdict = task.constraints.evaluate(r.scene.as_ref().expect("checked above"));
        let stored = (r.score.expect("scored"), r.feedback.as_deref());
        let fresh = (verdict.score(), verdict.feedback.as_deref());
        if stored != fresh {
            mismatches.push(format!(
                "step {}: stored {:.6} {:?}, recomputed {:.6} {:?}",
                r.step_index, stored.0, stored.1, fresh.0, fresh.1
            ));
        }
    }
    if args.shared.json {
        out(
            stdout,
            json!({"run_dir": dir, "rescored": scored.len(), "mismatches": mismatches}).to_string(),
        )?;
    } else if mismatches.is_empty() {
        out(stdout, format!("scores match ({} step(s) rescored)", scored.len()))?;
    } else {
        for m in &mismatches {
            out(stdout, m)?;
        }
        out(stdout, format!("scores differ at {} step(s)", mismatches.len()))?;
    }
    Ok(if mismatches.is_empty() { EXIT_CONVERGED } else { EXIT_ERROR })
}
