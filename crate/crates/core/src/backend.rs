//! The three agent contracts driven by the loop (planner, simulator, critic)
//! plus the answerer that turns the best visual thought into text.
//!
//! Requests borrow their inputs, so a backend cannot mutate the history it
//! is shown. Implementations must be `Send + Sync`: several runs may share
//! one backend, but a single run calls it strictly sequentially.

use thiserror::Error;

use crate::state::{
    Query, ReasoningState, StateError, TextualThought, Verification, VisualThought,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    /// Transport-level failure (timeout, connection refused, 5xx). Retryable.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("malformed backend output: {0}")]
    MalformedOutput(String),
    #[error("generation rejected: {0}")]
    GenerationRejected(String),
    #[error("unknown task: {0}")]
    UnknownTask(String),
    #[error("unrecognized feedback: {0}")]
    UnrecognizedFeedback(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("visual thought carries no scene metadata")]
    MissingScene,
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Unavailable(_))
    }
}

impl From<StateError> for BackendError {
    fn from(e: StateError) -> Self {
        BackendError::MalformedOutput(e.to_string())
    }
}

/// Input to the planner at step `t`: `(Q, F_{t-1}, H_{t-1})`.
#[derive(Debug, Clone, Copy)]
pub struct PlannerRequest<'a> {
    pub query: &'a Query,
    pub prior_feedback: Option<&'a str>,
    pub history: &'a [ReasoningState],
}

impl<'a> PlannerRequest<'a> {
    pub fn initial(query: &'a Query) -> Self {
        Self {
            query,
            prior_feedback: None,
            history: &[],
        }
    }

    /// The step index the planner must produce.
    pub fn step_index(&self) -> usize {
        self.history.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimulatorRequest<'a> {
    pub prompt: &'a TextualThought,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy)]
pub struct CritiqueRequest<'a> {
    pub visual: &'a VisualThought,
    pub query: &'a Query,
}

pub trait Planner: Send + Sync {
    fn id(&self) -> &str;
    fn plan(&self, request: &PlannerRequest<'_>) -> Result<TextualThought, BackendError>;
}

pub trait Simulator: Send + Sync {
    fn id(&self) -> &str;
    fn simulate(&self, request: &SimulatorRequest<'_>) -> Result<VisualThought, BackendError>;
}

/// Scores a visual thought against the query. The critic never sees the
/// convergence threshold; the loop decides what the score means.
pub trait Critic: Send + Sync {
    fn id(&self) -> &str;
    fn critique(&self, request: &CritiqueRequest<'_>) -> Result<Verification, BackendError>;
}

pub trait Answerer: Send + Sync {
    fn id(&self) -> &str;
    fn answer(&self, query: &Query, best: &VisualThought) -> Result<String, BackendError>;
}

/// The set of backends one run is wired to.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub planner: &'a dyn Planner,
    pub simulator: &'a dyn Simulator,
    pub critic: &'a dyn Critic,
    pub answerer: &'a dyn Answerer,
}
