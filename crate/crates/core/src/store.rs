//! Append-only run directories.
//!
//! ```text
//! {run_dir}/run.json            query, loop config, backend ids, start time
//! {run_dir}/trajectory.jsonl    one StepRecord per line, in step order
//! {run_dir}/images/step_{t}.png
//! {run_dir}/.lock               present while a writer owns the directory
//! ```
//!
//! An image is always written before the line that references it, so a
//! crash between the two leaves an orphan image and a consistent log.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{LoopConfig, RunObserver};
use crate::raster::{RasterError, RasterImage};
use crate::state::{
    ImagePayload, LayoutConstraints, Outcome, Query, ReasoningState, StateError, TaskMode,
    TerminationReason, TextualThought, Trajectory, Verification, VisualThought,
};
use crate::synthetic::SceneDescription;

pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const RUN_FILE: &str = "run.json";
pub const LOCK_FILE: &str = ".lock";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("no space left writing {}", .0.display())]
    StorageFull(PathBuf),
    #[error("permission denied: {}", .0.display())]
    PermissionDenied(PathBuf),
    #[error("record index mismatch: expected {expected}, got {got}")]
    IndexMismatch { expected: usize, got: usize },
    #[error("run directory {} already holds a run", .0.display())]
    RunExists(PathBuf),
    #[error("run directory {} is locked by another writer", .0.display())]
    Locked(PathBuf),
    #[error("corrupt record at line {line}: {message}")]
    CorruptRecord { line: usize, message: String },
    #[error("step {step} references missing image {}", path.display())]
    MissingImage { step: usize, path: PathBuf },
    #[error("{}: {message}", path.display())]
    BadRunFile { path: PathBuf, message: String },
    #[error(transparent)]
    Image(#[from] RasterError),
    #[error(transparent)]
    State(#[from] StateError),
}

fn io_error(path: &Path, source: io::Error) -> StoreError {
    match source.kind() {
        io::ErrorKind::PermissionDenied => StoreError::PermissionDenied(path.to_owned()),
        io::ErrorKind::StorageFull => StoreError::StorageFull(path.to_owned()),
        _ => StoreError::Io {
            path: path.to_owned(),
            source,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationRecord {
    pub reason: TerminationReason,
    pub best_step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// One line of `trajectory.jsonl`. Field names are part of the on-disk
/// format; unknown fields are ignored when reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    /// RFC 3339, UTC. Kept verbatim.
    pub timestamp: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutConstraints>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneDescription>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<TerminationRecord>,
}

pub fn image_relpath(step: usize) -> String {
    format!("{IMAGES_DIR}/step_{step}.png")
}

pub fn now_rfc3339() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// PNG bytes for a visual thought's image.
pub fn png_bytes(image: &ImagePayload) -> Result<Vec<u8>, StoreError> {
    match image {
        ImagePayload::Inline(raster) => Ok(raster.to_png()?),
        ImagePayload::File(path) => {
            let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
            // re-encode so the stored file is always a PNG
            Ok(RasterImage::from_png(&bytes)
                .or_else(|_| {
                    image::load_from_memory(&bytes)
                        .map_err(RasterError::from)
                        .and_then(|img| {
                            let rgb = img.to_rgb8();
                            let (w, h) = rgb.dimensions();
                            RasterImage::new(w, h, rgb.into_raw())
                        })
                })?
                .to_png()?)
        }
    }
}

impl StepRecord {
    /// Builds the record for `state`; returns the PNG bytes to store with it.
    pub fn from_state(
        state: &ReasoningState,
        timestamp: String,
        outcome: Option<&Outcome>,
    ) -> Result<(Self, Option<Vec<u8>>), StoreError> {
        let t = state.step_index();
        let visual = state.visual();
        let png = visual.map(|v| png_bytes(v.image())).transpose()?;
        let record = StepRecord {
            step_index: t,
            timestamp,
            prompt: state.textual().prompt().to_owned(),
            layout: state.textual().layout().cloned(),
            image_path: png.as_ref().map(|_| image_relpath(t)),
            scene: visual.and_then(VisualThought::scene).cloned(),
            score: state.verification().map(Verification::score),
            feedback: state
                .verification()
                .and_then(Verification::feedback)
                .map(str::to_owned),
            generator_id: visual.map(|v| v.generator_id().to_owned()),
            termination: outcome.map(|o| TerminationRecord {
                reason: o.reason(),
                best_step: o.best_step(),
                answer: o.answer().map(str::to_owned),
                failure: o.failure().map(str::to_owned),
            }),
        };
        Ok((record, png))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendIds {
    pub planner: String,
    pub simulator: String,
    pub critic: String,
    pub answerer: String,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub query: Query,
    pub config: LoopConfig,
    pub backends: BackendIds,
    pub started_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Free-form settings of the launching tool (fault injection, sizes, ...).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub settings: serde_json::Value,
}

fn count_records(path: &Path) -> Result<usize, StoreError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s.lines().filter(|l| !l.trim().is_empty()).count()),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
        Err(e) => Err(io_error(path, e)),
    }
}

fn write_image(run_dir: &Path, step: usize, png: &[u8]) -> Result<(), StoreError> {
    let dir = run_dir.join(IMAGES_DIR);
    fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let path = run_dir.join(image_relpath(step));
    let mut f = File::create(&path).map_err(|e| io_error(&path, e))?;
    f.write_all(png).map_err(|e| io_error(&path, e))?;
    f.sync_all().map_err(|e| io_error(&path, e))
}

fn append_line(run_dir: &Path, record: &StepRecord) -> Result<(), StoreError> {
    let path = run_dir.join(TRAJECTORY_FILE);
    let mut line = serde_json::to_string(record).expect("records serialize");
    line.push('\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| io_error(&path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| io_error(&path, e))?;
    f.sync_data().map_err(|e| io_error(&path, e))
}

/// Appends `record` to the run log, writing `png` (if any) to
/// `images/step_{t}.png` first. The record's `image_path` is set to match.
pub fn append_record(
    run_dir: &Path,
    record: &StepRecord,
    png: Option<&[u8]>,
) -> Result<(), StoreError> {
    let expected = count_records(&run_dir.join(TRAJECTORY_FILE))?;
    if record.step_index != expected {
        return Err(StoreError::IndexMismatch {
            expected,
            got: record.step_index,
        });
    }
    let mut record = record.clone();
    match png {
        Some(bytes) => {
            write_image(run_dir, record.step_index, bytes)?;
            record.image_path = Some(image_relpath(record.step_index));
        }
        None => record.image_path = None,
    }
    append_line(run_dir, &record)
}

/// Exclusive writer for one run directory; releases the lock on drop.
#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
}

impl RunWriter {
    /// Creates the run layout. Refuses a directory that already holds a run
    /// or is locked by another writer.
    pub fn create(dir: impl Into<PathBuf>, meta: &RunMeta) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        if dir.join(TRAJECTORY_FILE).exists() || dir.join(RUN_FILE).exists() {
            return Err(StoreError::RunExists(dir));
        }
        let lock = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                return Err(StoreError::Locked(dir))
            }
            Err(e) => return Err(io_error(&lock, e)),
        }
        let writer = Self { dir };
        let run_file = writer.dir.join(RUN_FILE);
        let json = serde_json::to_string_pretty(meta).expect("run meta serializes");
        fs::write(&run_file, json + "\n").map_err(|e| io_error(&run_file, e))?;
        let images = writer.dir.join(IMAGES_DIR);
        fs::create_dir_all(&images).map_err(|e| io_error(&images, e))?;
        let log = writer.dir.join(TRAJECTORY_FILE);
        File::create(&log).map_err(|e| io_error(&log, e))?;
        Ok(writer)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, record: &StepRecord, png: Option<&[u8]>) -> Result<(), StoreError> {
        append_record(&self.dir, record, png)
    }

    pub fn append_state(
        &mut self,
        state: &ReasoningState,
        outcome: Option<&Outcome>,
    ) -> Result<(), StoreError> {
        let (record, png) = StepRecord::from_state(state, now_rfc3339(), outcome)?;
        self.append(&record, png.as_deref())
    }
}

impl Drop for RunWriter {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.dir.join(LOCK_FILE));
    }
}

impl RunObserver for RunWriter {
    fn on_step(
        &mut self,
        state: &ReasoningState,
        outcome: Option<&Outcome>,
    ) -> Result<(), String> {
        self.append_state(state, outcome).map_err(|e| e.to_string())
    }
}

/// Everything recovered from a run directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub meta: RunMeta,
    pub records: Vec<StepRecord>,
    pub trajectory: Trajectory,
    pub outcome: Option<Outcome>,
}

pub fn read_meta(run_dir: &Path) -> Result<RunMeta, StoreError> {
    let path = run_dir.join(RUN_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
    serde_json::from_str(&text).map_err(|e| StoreError::BadRunFile {
        path,
        message: e.to_string(),
    })
}

/// Reads and validates the step log without decoding images.
pub fn read_records(run_dir: &Path) -> Result<Vec<StepRecord>, StoreError> {
    let path = run_dir.join(TRAJECTORY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
    let writer_active = run_dir.join(LOCK_FILE).exists();
    let mut records = Vec::new();
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, raw) in lines.iter().enumerate() {
        let line_no = i + 1;
        let complete = raw.ends_with('\n');
        if !complete && writer_active {
            // a write in progress; the prefix before it is consistent
            break;
        }
        let body = raw.trim();
        if body.is_empty() {
            continue;
        }
        let record: StepRecord =
            serde_json::from_str(body).map_err(|e| StoreError::CorruptRecord {
                line: line_no,
                message: if complete {
                    e.to_string()
                } else {
                    format!("truncated line: {e}")
                },
            })?;
        if record.step_index != records.len() {
            return Err(StoreError::CorruptRecord {
                line: line_no,
                message: format!(
                    "step_index {} out of order (expected {})",
                    record.step_index,
                    records.len()
                ),
            });
        }
        if !complete {
            return Err(StoreError::CorruptRecord {
                line: line_no,
                message: "line is not newline-terminated".into(),
            });
        }
        records.push(record);
    }
    if let Some(pos) = records[..records.len().saturating_sub(1)]
        .iter()
        .position(|r| r.termination.is_some())
    {
        return Err(StoreError::CorruptRecord {
            line: pos + 1,
            message: "termination on a non-final record".into(),
        });
    }
    Ok(records)
}

fn state_from_record(
    run_dir: &Path,
    record: &StepRecord,
    line: usize,
) -> Result<ReasoningState, StoreError> {
    let corrupt = |message: String| StoreError::CorruptRecord { line, message };
    let t = record.step_index;
    let textual = TextualThought::new(t, record.prompt.clone())
        .map_err(|e| corrupt(e.to_string()))?
        .with_layout(record.layout.clone());
    let visual = match &record.image_path {
        Some(rel) => {
            let path = run_dir.join(rel);
            let bytes = match fs::read(&path) {
                Ok(b) => b,
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    return Err(StoreError::MissingImage { step: t, path })
                }
                Err(e) => return Err(io_error(&path, e)),
            };
            let raster = RasterImage::from_png(&bytes)?;
            Some(
                VisualThought::new(
                    t,
                    ImagePayload::Inline(raster),
                    record.generator_id.clone().unwrap_or_default(),
                )
                .with_scene(record.scene.clone()),
            )
        }
        None => None,
    };
    let verification = record
        .score
        .map(|s| Verification::new(s, record.feedback.clone()))
        .transpose()
        .map_err(|e| corrupt(e.to_string()))?;
    ReasoningState::new(textual, visual, verification).map_err(|e| corrupt(e.to_string()))
}

pub fn load_run(run_dir: &Path) -> Result<LoadedRun, StoreError> {
    let meta = read_meta(run_dir)?;
    let records = read_records(run_dir)?;
    let mut trajectory = Trajectory::new(meta.query.clone());
    for (i, record) in records.iter().enumerate() {
        trajectory.append_step(state_from_record(run_dir, record, i + 1)?)?;
    }
    let outcome = match records.last().and_then(|r| r.termination.as_ref()) {
        None => None,
        Some(term) => {
            let deliverable = match meta.query.mode() {
                TaskMode::VisualGeneration => trajectory
                    .steps()
                    .get(term.best_step)
                    .and_then(|s| s.visual().cloned()),
                TaskMode::QuestionAnswering => None,
            };
            let outcome = Outcome::new(
                term.reason,
                term.best_step,
                term.answer.clone(),
                deliverable,
                term.failure.clone(),
                trajectory.clone(),
            )
            .map_err(|e| StoreError::CorruptRecord {
                line: records.len(),
                message: e.to_string(),
            })?;
            Some(outcome)
        }
    };
    Ok(LoadedRun {
        meta,
        records,
        trajectory,
        outcome,
    })
}

/// Reconstructs the trajectory and, when the run finished, its outcome.
pub fn load_trajectory(run_dir: &Path) -> Result<(Trajectory, Option<Outcome>), StoreError> {
    let run = load_run(run_dir)?;
    Ok((run.trajectory, run.outcome))
}
