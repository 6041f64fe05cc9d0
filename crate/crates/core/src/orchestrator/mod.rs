//! The closed loop: plan, simulate, critique, then stop or refine.
//!
//! A run is strictly sequential. After every scored step the termination
//! check runs (converged, budget, deadlock in that order). When the loop
//! ends, the highest-scoring visual thought (earliest on ties) grounds the
//! final answer in question-answering mode, or is returned as the
//! deliverable in visual-generation mode.

mod retry;
mod termination;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use retry::{Backoff, RecordingSleeper, RetryPolicy, Sleeper, ThreadSleeper};
pub use termination::{
    check_termination, detect_oscillation, prompt_similarity, TerminationDecision,
};

use crate::backend::{
    Answerer, BackendError, Backends, CritiqueRequest, PlannerRequest, SimulatorRequest,
};
use crate::state::{
    Outcome, Query, ReasoningState, StateError, TaskMode, TerminationReason, Trajectory,
    Verification, VisualThought,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Convergence threshold; a step converges when its score is strictly above.
    pub tau: f64,
    pub max_iters: usize,
    pub oscillation_window: usize,
    pub oscillation_similarity: f64,
    pub transport_retries: u32,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            tau: 0.99,
            max_iters: 8,
            oscillation_window: 4,
            oscillation_similarity: 0.9,
            transport_retries: 3,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: &str| Err(RunError::InvalidConfig(msg.to_string()));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1");
        }
        if self.oscillation_window < 2 {
            return bad("oscillation_window must be at least 2");
        }
        if !(self.oscillation_similarity > 0.0 && self.oscillation_similarity <= 1.0) {
            return bad("oscillation_similarity must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Plan,
    Simulate,
    Critique,
    Answer,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Plan => "plan",
            Stage::Simulate => "simulate",
            Stage::Critique => "critique",
            Stage::Answer => "answer",
        })
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid loop configuration: {0}")]
    InvalidConfig(String),
    #[error("{stage} failed at step {step}: {source}")]
    Backend {
        stage: Stage,
        step: usize,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    State(#[from] StateError),
    #[error("step observer failed: {0}")]
    Observer(String),
}

impl RunError {
    pub fn backend_error(&self) -> Option<&BackendError> {
        match self {
            RunError::Backend { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Receives each step once it is final. The last step of a run is reported
/// together with the outcome.
pub trait RunObserver {
    fn on_step(
        &mut self,
        state: &ReasoningState,
        outcome: Option<&Outcome>,
    ) -> Result<(), String>;
}

struct NoObserver;

impl RunObserver for NoObserver {
    fn on_step(&mut self, _: &ReasoningState, _: Option<&Outcome>) -> Result<(), String> {
        Ok(())
    }
}

/// Asks the answerer for the final answer, rejecting blank output.
pub fn synthesize_answer(
    query: &Query,
    best: &VisualThought,
    answerer: &dyn Answerer,
) -> Result<String, BackendError> {
    let answer = answerer.answer(query, best)?;
    if answer.trim().is_empty() {
        return Err(BackendError::MalformedOutput("empty answer".into()));
    }
    Ok(answer)
}

pub struct Orchestrator<'a> {
    backends: Backends<'a>,
    config: LoopConfig,
    retry: RetryPolicy,
    seed: Option<u64>,
}

enum StepEnd {
    Scored(ReasoningState),
    /// A terminal backend failure; the partially built state, if any.
    Failed(Option<ReasoningState>, RunError),
}

impl<'a> Orchestrator<'a> {
    pub fn new(backends: Backends<'a>, config: LoopConfig) -> Self {
        Self {
            backends,
            retry: RetryPolicy::new(config.transport_retries),
            config,
            seed: None,
        }
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Seed forwarded to the simulator with every request.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn config(&self) -> &LoopConfig {
        &self.config
    }

    pub fn run(&self, query: &Query) -> Result<Outcome, RunError> {
        self.run_observed(query, &mut NoObserver)
    }

    pub fn run_observed(
        &self,
        query: &Query,
        observer: &mut dyn RunObserver,
    ) -> Result<Outcome, RunError> {
        self.config.validate()?;
        let mut trajectory = Trajectory::new(query.clone());
        let mut prompts: Vec<String> = Vec::new();

        for t in 0..self.config.max_iters {
            let prior_feedback = trajectory
                .steps()
                .last()
                .and_then(ReasoningState::verification)
                .and_then(Verification::feedback)
                .map(str::to_owned);

            let step = self.step(t, query, &trajectory, prior_feedback.as_deref());
            // the previous step is now known not to be the last one
            if let (Some(prev), StepEnd::Scored(_) | StepEnd::Failed(Some(_), _)) =
                (trajectory.steps().last(), &step)
            {
                observer.on_step(prev, None).map_err(RunError::Observer)?;
            }

            match step {
                StepEnd::Scored(state) => {
                    let verification = state.verification().expect("scored").clone();
                    prompts.push(state.textual().prompt().to_owned());
                    trajectory.append_step(state)?;
                    if let TerminationDecision::Stop(reason) =
                        check_termination(&verification, t, &prompts, &self.config)
                    {
                        return self.finish(trajectory, reason, None, observer);
                    }
                }
                StepEnd::Failed(partial, err) => {
                    let had_partial = partial.is_some();
                    if let Some(p) = partial {
                        trajectory.append_step(p)?;
                    }
                    if trajectory.best_visual_thought().is_err() {
                        if had_partial {
                            let last = trajectory.steps().last().expect("just appended");
                            observer.on_step(last, None).map_err(RunError::Observer)?;
                        }
                        return Err(err);
                    }
                    log::warn!("run stopped early: {err}");
                    return self.finish(
                        trajectory,
                        TerminationReason::BudgetExhausted,
                        Some(err.to_string()),
                        observer,
                    );
                }
            }
        }
        unreachable!("the budget check stops the loop at max_iters")
    }

    fn step(
        &self,
        t: usize,
        query: &Query,
        trajectory: &Trajectory,
        prior_feedback: Option<&str>,
    ) -> StepEnd {
        let fail = |stage, source| RunError::Backend {
            stage,
            step: t,
            source,
        };
        let request = PlannerRequest {
            query,
            prior_feedback,
            history: trajectory.steps(),
        };
        let textual = match self.retry.call(|| self.backends.planner.plan(&request)) {
            Ok(th) if th.step_index() == t => th,
            Ok(th) => {
                let msg = format!("planner returned step {} for step {t}", th.step_index());
                return StepEnd::Failed(None, fail(Stage::Plan, BackendError::MalformedOutput(msg)));
            }
            Err(e) => return StepEnd::Failed(None, fail(Stage::Plan, e)),
        };
        let partial = |visual: Option<VisualThought>| {
            ReasoningState::new(textual.clone(), visual, None).expect("unscored state is valid")
        };

        let sim_request = SimulatorRequest {
            prompt: &textual,
            seed: self.seed,
        };
        let visual = match self.retry.call(|| self.backends.simulator.simulate(&sim_request)) {
            Ok(v) if v.step_index() == t => v,
            Ok(v) => {
                let msg = format!("simulator returned step {} for step {t}", v.step_index());
                return StepEnd::Failed(
                    Some(partial(None)),
                    fail(Stage::Simulate, BackendError::MalformedOutput(msg)),
                );
            }
            Err(e) => return StepEnd::Failed(Some(partial(None)), fail(Stage::Simulate, e)),
        };

        let critique_request = CritiqueRequest {
            visual: &visual,
            query,
        };
        let verification = match self
            .retry
            .call(|| self.backends.critic.critique(&critique_request))
        {
            Ok(v) if v.score() <= self.config.tau && v.feedback().is_none() => {
                let msg = format!("score {} is not above tau but carries no feedback", v.score());
                return StepEnd::Failed(
                    Some(partial(Some(visual))),
                    fail(Stage::Critique, BackendError::MalformedOutput(msg)),
                );
            }
            Ok(v) => v,
            Err(e) => {
                return StepEnd::Failed(Some(partial(Some(visual))), fail(Stage::Critique, e))
            }
        };
        match ReasoningState::new(textual, Some(visual), Some(verification)) {
            Ok(state) => StepEnd::Scored(state),
            Err(e) => StepEnd::Failed(None, e.into()),
        }
    }

    fn finish(
        &self,
        trajectory: Trajectory,
        reason: TerminationReason,
        failure: Option<String>,
        observer: &mut dyn RunObserver,
    ) -> Result<Outcome, RunError> {
        let (best_step, best, _) = trajectory.best_visual_thought()?;
        let best = best.clone();
        let query = trajectory.query().clone();
        let (answer, deliverable) = match query.mode() {
            TaskMode::QuestionAnswering => {
                let answer = self
                    .retry
                    .call(|| synthesize_answer(&query, &best, self.backends.answerer))
                    .map_err(|source| RunError::Backend {
                        stage: Stage::Answer,
                        step: best_step,
                        source,
                    })?;
                (Some(answer), None)
            }
            TaskMode::VisualGeneration => (None, Some(best)),
        };
        let outcome = Outcome::new(reason, best_step, answer, deliverable, failure, trajectory)?;
        let last = outcome
            .trajectory()
            .steps()
            .last()
            .expect("outcome has a scored step");
        observer
            .on_step(last, Some(&outcome))
            .map_err(RunError::Observer)?;
        Ok(outcome)
    }
}

/// Runs one query with the default retry policy.
pub fn run(query: &Query, config: LoopConfig, backends: Backends<'_>) -> Result<Outcome, RunError> {
    Orchestrator::new(backends, config).run(query)
}
