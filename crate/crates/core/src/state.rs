//! Domain values for one reasoning run: queries, textual and visual thoughts,
//! critic verdicts, the step history and the terminal outcome.
//!
//! Everything here is a plain immutable value. Constructors enforce the
//! invariants, so a value that exists is a valid one.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::RasterImage;
use crate::synthetic::SceneDescription;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("{0} must be non-empty")]
    Empty(&'static str),
    #[error("verification score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("layout box {label:?}: {reason}")]
    InvalidBox { label: String, reason: &'static str },
    #[error("step index mismatch: expected {expected}, got {got}")]
    IndexMismatch { expected: usize, got: usize },
    #[error("reasoning state is inconsistent: {0}")]
    InconsistentState(&'static str),
    #[error("no step carries both a visual thought and a verification")]
    NoScoredStep,
    #[error("outcome is inconsistent: {0}")]
    InconsistentOutcome(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    /// The run ends with a textual answer grounded in the best visual thought.
    QuestionAnswering,
    /// The run ends with the best visual thought itself as the deliverable.
    VisualGeneration,
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskMode::QuestionAnswering => "question_answering",
            TaskMode::VisualGeneration => "visual_generation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QueryFields")]
pub struct Query {
    id: String,
    text: String,
    mode: TaskMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    constraints_hint: Option<String>,
}

#[derive(Deserialize)]
struct QueryFields {
    id: String,
    text: String,
    mode: TaskMode,
    #[serde(default)]
    constraints_hint: Option<String>,
}

impl TryFrom<QueryFields> for Query {
    type Error = StateError;
    fn try_from(f: QueryFields) -> Result<Self, Self::Error> {
        Ok(Query::new(f.id, f.text, f.mode)?.with_hint(f.constraints_hint))
    }
}

impl Query {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        mode: TaskMode,
    ) -> Result<Self, StateError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(StateError::Empty("query text"));
        }
        Ok(Self {
            id: id.into(),
            text,
            mode,
            constraints_hint: None,
        })
    }

    pub fn with_hint(mut self, hint: Option<String>) -> Self {
        self.constraints_hint = hint.filter(|h| !h.trim().is_empty());
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn mode(&self) -> TaskMode {
        self.mode
    }

    pub fn constraints_hint(&self) -> Option<&str> {
        self.constraints_hint.as_deref()
    }
}

/// A labelled box in normalized image coordinates, origin at the top left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutBox {
    pub label: String,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl LayoutBox {
    pub fn validate(&self) -> Result<(), StateError> {
        let fail = |reason| {
            Err(StateError::InvalidBox {
                label: self.label.clone(),
                reason,
            })
        };
        if self.label.trim().is_empty() {
            return fail("label is empty");
        }
        let coords = [self.x0, self.y0, self.x1, self.y1];
        if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return fail("coordinates must lie in [0, 1]");
        }
        if self.x0 >= self.x1 || self.y0 >= self.y1 {
            return fail("requires x0 < x1 and y0 < y1");
        }
        Ok(())
    }
}

/// Structural conditioning attached to a textual thought. `extra` is passed
/// to simulator backends untouched (depth maps, control images, ...).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "LayoutFields")]
pub struct LayoutConstraints {
    boxes: Vec<LayoutBox>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Deserialize)]
struct LayoutFields {
    #[serde(default)]
    boxes: Vec<LayoutBox>,
    #[serde(default)]
    extra: BTreeMap<String, serde_json::Value>,
}

impl TryFrom<LayoutFields> for LayoutConstraints {
    type Error = StateError;
    fn try_from(f: LayoutFields) -> Result<Self, Self::Error> {
        LayoutConstraints::new(f.boxes, f.extra)
    }
}

impl LayoutConstraints {
    pub fn new(
        boxes: Vec<LayoutBox>,
        extra: BTreeMap<String, serde_json::Value>,
    ) -> Result<Self, StateError> {
        for b in &boxes {
            b.validate()?;
        }
        Ok(Self { boxes, extra })
    }

    pub fn boxes(&self) -> &[LayoutBox] {
        &self.boxes
    }

    pub fn extra(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.extra
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TextualFields")]
pub struct TextualThought {
    step_index: usize,
    prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    layout: Option<LayoutConstraints>,
}

#[derive(Deserialize)]
struct TextualFields {
    step_index: usize,
    prompt: String,
    #[serde(default)]
    layout: Option<LayoutConstraints>,
}

impl TryFrom<TextualFields> for TextualThought {
    type Error = StateError;
    fn try_from(f: TextualFields) -> Result<Self, Self::Error> {
        Ok(TextualThought::new(f.step_index, f.prompt)?.with_layout(f.layout))
    }
}

impl TextualThought {
    pub fn new(step_index: usize, prompt: impl Into<String>) -> Result<Self, StateError> {
        let prompt = prompt.into();
        if prompt.trim().is_empty() {
            return Err(StateError::Empty("prompt"));
        }
        Ok(Self {
            step_index,
            prompt,
            layout: None,
        })
    }

    pub fn with_layout(mut self, layout: Option<LayoutConstraints>) -> Self {
        self.layout = layout;
        self
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn layout(&self) -> Option<&LayoutConstraints> {
        self.layout.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImagePayload {
    Inline(RasterImage),
    /// A stored image file, left undecoded.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualThought {
    step_index: usize,
    image: ImagePayload,
    #[serde(skip_serializing_if = "Option::is_none")]
    scene: Option<SceneDescription>,
    generator_id: String,
}

impl VisualThought {
    pub fn new(step_index: usize, image: ImagePayload, generator_id: impl Into<String>) -> Self {
        Self {
            step_index,
            image,
            scene: None,
            generator_id: generator_id.into(),
        }
    }

    pub fn with_scene(mut self, scene: Option<SceneDescription>) -> Self {
        self.scene = scene;
        self
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn image(&self) -> &ImagePayload {
        &self.image
    }

    pub fn scene(&self) -> Option<&SceneDescription> {
        self.scene.as_ref()
    }

    pub fn generator_id(&self) -> &str {
        &self.generator_id
    }
}

/// A critic verdict: a score in `[0, 1]` and optional corrective feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VerificationFields")]
pub struct Verification {
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    feedback: Option<String>,
}

#[derive(Deserialize)]
struct VerificationFields {
    score: f64,
    #[serde(default)]
    feedback: Option<String>,
}

impl TryFrom<VerificationFields> for Verification {
    type Error = StateError;
    fn try_from(f: VerificationFields) -> Result<Self, Self::Error> {
        Verification::new(f.score, f.feedback)
    }
}

impl Verification {
    /// Fails on NaN, on scores outside `[0, 1]` and on blank feedback.
    pub fn new(score: f64, feedback: Option<String>) -> Result<Self, StateError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(StateError::ScoreOutOfRange(score));
        }
        if matches!(&feedback, Some(f) if f.trim().is_empty()) {
            return Err(StateError::Empty("feedback"));
        }
        Ok(Self { score, feedback })
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn feedback(&self) -> Option<&str> {
        self.feedback.as_deref()
    }
}

/// One loop step `S_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningState {
    textual: TextualThought,
    visual: Option<VisualThought>,
    verification: Option<Verification>,
}

impl ReasoningState {
    pub fn new(
        textual: TextualThought,
        visual: Option<VisualThought>,
        verification: Option<Verification>,
    ) -> Result<Self, StateError> {
        if verification.is_some() && visual.is_none() {
            return Err(StateError::InconsistentState(
                "verification without a visual thought",
            ));
        }
        if let Some(v) = &visual {
            if v.step_index() != textual.step_index() {
                return Err(StateError::InconsistentState(
                    "visual and textual thoughts disagree on step index",
                ));
            }
        }
        Ok(Self {
            textual,
            visual,
            verification,
        })
    }

    pub fn step_index(&self) -> usize {
        self.textual.step_index()
    }

    pub fn textual(&self) -> &TextualThought {
        &self.textual
    }

    pub fn visual(&self) -> Option<&VisualThought> {
        self.visual.as_ref()
    }

    pub fn verification(&self) -> Option<&Verification> {
        self.verification.as_ref()
    }

    pub fn is_complete(&self) -> bool {
        self.visual.is_some() && self.verification.is_some()
    }
}

/// Append-only step history `H_t` for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    query: Query,
    steps: Vec<ReasoningState>,
}

impl Trajectory {
    pub fn new(query: Query) -> Self {
        Self {
            query,
            steps: Vec::new(),
        }
    }

    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn steps(&self) -> &[ReasoningState] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn append_step(&mut self, state: ReasoningState) -> Result<(), StateError> {
        if state.step_index() != self.steps.len() {
            return Err(StateError::IndexMismatch {
                expected: self.steps.len(),
                got: state.step_index(),
            });
        }
        self.steps.push(state);
        Ok(())
    }

    /// Returns `R_best`: the scored step with the highest score, earliest on ties.
    pub fn best_visual_thought(
        &self,
    ) -> Result<(usize, &VisualThought, &Verification), StateError> {
        let mut best: Option<(usize, &VisualThought, &Verification)> = None;
        for (i, step) in self.steps.iter().enumerate() {
            if let (Some(vis), Some(ver)) = (step.visual(), step.verification()) {
                // strict comparison keeps the earliest maximum
                if best.is_none_or(|(_, _, b)| ver.score() > b.score()) {
                    best = Some((i, vis, ver));
                }
            }
        }
        best.ok_or(StateError::NoScoredStep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Converged,
    BudgetExhausted,
    Deadlock,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationReason::Converged => "converged",
            TerminationReason::BudgetExhausted => "budget_exhausted",
            TerminationReason::Deadlock => "deadlock",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    reason: TerminationReason,
    best_step: usize,
    answer: Option<String>,
    deliverable: Option<VisualThought>,
    /// Set when the run stopped early on a backend failure.
    failure: Option<String>,
    trajectory: Trajectory,
}

impl Outcome {
    /// Builds an outcome and checks it against the mode table.
    pub fn new(
        reason: TerminationReason,
        best_step: usize,
        answer: Option<String>,
        deliverable: Option<VisualThought>,
        failure: Option<String>,
        trajectory: Trajectory,
    ) -> Result<Self, StateError> {
        let outcome = Self {
            reason,
            best_step,
            answer,
            deliverable,
            failure,
            trajectory,
        };
        outcome.check_consistency()?;
        Ok(outcome)
    }

    pub fn check_consistency(&self) -> Result<(), StateError> {
        let step = self
            .trajectory
            .steps()
            .get(self.best_step)
            .ok_or(StateError::InconsistentOutcome("best_step out of range"))?;
        if step.verification().is_none() {
            return Err(StateError::InconsistentOutcome("best_step is not scored"));
        }
        match self.trajectory.query().mode() {
            TaskMode::QuestionAnswering => {
                if !self.answer.as_deref().is_some_and(|a| !a.trim().is_empty()) {
                    return Err(StateError::InconsistentOutcome(
                        "question answering requires an answer",
                    ));
                }
            }
            TaskMode::VisualGeneration => match &self.deliverable {
                Some(d) if Some(d) == step.visual() => {}
                Some(_) => {
                    return Err(StateError::InconsistentOutcome(
                        "deliverable differs from the best visual thought",
                    ))
                }
                None => {
                    return Err(StateError::InconsistentOutcome(
                        "visual generation requires a deliverable",
                    ))
                }
            },
        }
        if self.reason == TerminationReason::Converged && self.failure.is_some() {
            return Err(StateError::InconsistentOutcome(
                "a failed run cannot converge",
            ));
        }
        Ok(())
    }

    pub fn reason(&self) -> TerminationReason {
        self.reason
    }

    pub fn best_step(&self) -> usize {
        self.best_step
    }

    pub fn best_score(&self) -> f64 {
        self.trajectory.steps()[self.best_step]
            .verification()
            .map(Verification::score)
            .expect("checked at construction")
    }

    pub fn answer(&self) -> Option<&str> {
        self.answer.as_deref()
    }

    pub fn deliverable(&self) -> Option<&VisualThought> {
        self.deliverable.as_ref()
    }

    pub fn failure(&self) -> Option<&str> {
        self.failure.as_deref()
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.trajectory
    }
}
