use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use cothought_core::orchestrator::{RecordingSleeper, RetryPolicy};
use cothought_core::synthetic::{
    square_cuts_task, stack_task, CensusAnswerer, FaultPlan, FaultSpec, OracleCritic,
    SceneSimulator, ScriptedPlanner, TaskLibrary,
};
use cothought_core::{
    Answerer, BackendError, Backends, Critic, CritiqueRequest, ImagePayload, LoopConfig,
    Orchestrator, Planner, PlannerRequest, Query, RasterImage, RunError, RunObserver, Simulator,
    SimulatorRequest, TaskMode, TerminationReason, TextualThought, Verification, VisualThought,
};

struct ListPlanner(Vec<String>);

impl Planner for ListPlanner {
    fn id(&self) -> &str {
        "list"
    }
    fn plan(&self, r: &PlannerRequest<'_>) -> Result<TextualThought, BackendError> {
        let t = r.step_index();
        Ok(TextualThought::new(t, self.0[t % self.0.len()].clone())?)
    }
}

struct Blank;

impl Simulator for Blank {
    fn id(&self) -> &str {
        "blank"
    }
    fn simulate(&self, r: &SimulatorRequest<'_>) -> Result<VisualThought, BackendError> {
        let img = RasterImage::filled(1, 1, [0, 0, 0]).unwrap();
        Ok(VisualThought::new(r.prompt.step_index(), ImagePayload::Inline(img), "blank"))
    }
}

struct Constant(f64);

impl Critic for Constant {
    fn id(&self) -> &str {
        "constant"
    }
    fn critique(&self, _: &CritiqueRequest<'_>) -> Result<Verification, BackendError> {
        Ok(Verification::new(self.0, Some("try again".into()))?)
    }
}

struct Echo;

impl Answerer for Echo {
    fn id(&self) -> &str {
        "echo"
    }
    fn answer(&self, _: &Query, best: &VisualThought) -> Result<String, BackendError> {
        Ok(format!("step {}", best.step_index()))
    }
}

fn qa(text: &str) -> Query {
    Query::new("q", text, TaskMode::QuestionAnswering).unwrap()
}

fn no_retry() -> RetryPolicy {
    RetryPolicy::new(0).with_sleeper(Arc::new(RecordingSleeper::default()))
}

fn distinct_prompts(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| format!("attempt {i} uses words w{i}a w{i}b w{i}c"))
        .collect()
}

#[test]
fn three_faults_converge_at_step_three() {
    let lib = Arc::new(TaskLibrary::builtin());
    let task = square_cuts_task();
    let planner = ScriptedPlanner::new(lib.clone()).with_fault_plan(FaultPlan::omit(&[0, 1, 2]));
    let sim = SceneSimulator::new(64, 64);
    let critic = OracleCritic::new(lib);
    let backends = Backends {
        planner: &planner,
        simulator: &sim,
        critic: &critic,
        answerer: &CensusAnswerer,
    };
    let outcome = Orchestrator::new(backends, LoopConfig::default())
        .run(&task.query().unwrap())
        .unwrap();
    assert_eq!(outcome.reason(), TerminationReason::Converged);
    assert_eq!(outcome.trajectory().len(), 4);
    assert_eq!(outcome.best_step(), 3);
    assert_eq!(outcome.best_score(), 1.0);
    assert_eq!(
        outcome.answer(),
        Some("3 triangles, 1 rectangle, 2 quadrilaterals, 1 pentagon")
    );
}

#[test]
fn seeded_faults_converge_in_exactly_k() {
    let lib = Arc::new(TaskLibrary::builtin());
    let sim = SceneSimulator::new(32, 32);
    let critic = OracleCritic::new(lib.clone());
    for task in lib.tasks() {
        let slots = task.fault_slots().len();
        for k in 0..=slots.min(3) {
            for seed in 0..20 {
                let planner = ScriptedPlanner::new(lib.clone())
                    .with_faults(Some(FaultSpec { count: k, seed }));
                let backends = Backends {
                    planner: &planner,
                    simulator: &sim,
                    critic: &critic,
                    answerer: &CensusAnswerer,
                };
                let out = Orchestrator::new(backends, LoopConfig::default())
                    .run(&task.query().unwrap())
                    .unwrap_or_else(|e| panic!("{} k={k} seed={seed}: {e}", task.key));
                assert_eq!(out.reason(), TerminationReason::Converged, "{} k={k} seed={seed}", task.key);
                assert_eq!(out.trajectory().len(), k + 1, "{} k={k} seed={seed}", task.key);
                assert_eq!(out.best_score(), 1.0);
            }
        }
    }
}

#[test]
fn generation_mode_returns_best_visual() {
    let lib = Arc::new(TaskLibrary::builtin());
    let task = stack_task();
    let planner = ScriptedPlanner::new(lib.clone()).with_fault_plan(FaultPlan::omit(&[2]));
    let sim = SceneSimulator::new(32, 32);
    let critic = OracleCritic::new(lib);
    let backends = Backends {
        planner: &planner,
        simulator: &sim,
        critic: &critic,
        answerer: &CensusAnswerer,
    };
    let out = Orchestrator::new(backends, LoopConfig::default())
        .run(&task.query().unwrap())
        .unwrap();
    assert_eq!(out.reason(), TerminationReason::Converged);
    assert!(out.answer().is_none());
    let best = &out.trajectory().steps()[out.best_step()];
    assert_eq!(out.deliverable(), best.visual());
}

#[test]
fn alternating_prompts_deadlock() {
    let planner = ListPlanner(vec![
        "place the red cube on the blue cube".into(),
        "put the blue cube under the red cube".into(),
    ]);
    let backends = Backends {
        planner: &planner,
        simulator: &Blank,
        critic: &Constant(0.0),
        answerer: &Echo,
    };
    let out = Orchestrator::new(backends, LoopConfig::default())
        .with_retry_policy(no_retry())
        .run(&qa("stack"))
        .unwrap();
    assert_eq!(out.reason(), TerminationReason::Deadlock);
    // period two: fires at the third prompt
    assert_eq!(out.trajectory().len(), 3);
}

#[test]
fn constant_half_exhausts_budget_earliest_best() {
    let planner = ListPlanner(distinct_prompts(4));
    let backends = Backends {
        planner: &planner,
        simulator: &Blank,
        critic: &Constant(0.5),
        answerer: &Echo,
    };
    let cfg = LoopConfig {
        max_iters: 4,
        ..LoopConfig::default()
    };
    let out = Orchestrator::new(backends, cfg)
        .with_retry_policy(no_retry())
        .run(&qa("anything"))
        .unwrap();
    assert_eq!(out.reason(), TerminationReason::BudgetExhausted);
    assert_eq!(out.trajectory().len(), 4);
    assert_eq!(out.best_step(), 0);
    assert_eq!(out.answer(), Some("step 0"));
}

#[test]
fn convergence_on_last_iteration_wins_over_budget() {
    let planner = ListPlanner(distinct_prompts(1));
    let backends = Backends {
        planner: &planner,
        simulator: &Blank,
        critic: &Constant(1.0),
        answerer: &Echo,
    };
    let cfg = LoopConfig {
        max_iters: 1,
        ..LoopConfig::default()
    };
    let out = Orchestrator::new(backends, cfg).run(&qa("x")).unwrap();
    assert_eq!(out.reason(), TerminationReason::Converged);
}

/// (step, latest feedback, prior prompts) per call.
type Seen = Vec<(usize, Option<String>, Vec<String>)>;

struct RecordingPlanner {
    seen: Mutex<Seen>,
}

impl Planner for RecordingPlanner {
    fn id(&self) -> &str {
        "recording"
    }
    fn plan(&self, r: &PlannerRequest<'_>) -> Result<TextualThought, BackendError> {
        let prompts = r.history.iter().map(|s| s.textual().prompt().to_owned()).collect();
        self.seen.lock().unwrap().push((
            r.history.len(),
            r.prior_feedback.map(str::to_owned),
            prompts,
        ));
        let t = r.step_index();
        Ok(TextualThought::new(t, format!("unique plan number {t} with tail {t}x {t}y"))?)
    }
}

struct Countdown(AtomicUsize);

impl Critic for Countdown {
    fn id(&self) -> &str {
        "countdown"
    }
    fn critique(&self, _: &CritiqueRequest<'_>) -> Result<Verification, BackendError> {
        let n = self.0.fetch_add(1, Ordering::SeqCst);
        Ok(Verification::new(0.1 * n as f64, Some(format!("feedback {n}")))?)
    }
}

#[test]
fn planner_sees_exact_prefix() {
    let planner = RecordingPlanner {
        seen: Mutex::new(Vec::new()),
    };
    let critic = Countdown(AtomicUsize::new(0));
    let backends = Backends {
        planner: &planner,
        simulator: &Blank,
        critic: &critic,
        answerer: &Echo,
    };
    let out = Orchestrator::new(backends, LoopConfig::default())
        .run(&qa("prefix"))
        .unwrap();
    let seen = planner.seen.lock().unwrap();
    assert_eq!(seen.len(), out.trajectory().len());
    for (t, (len, feedback, prompts)) in seen.iter().enumerate() {
        assert_eq!(*len, t);
        let expected: Vec<String> = out.trajectory().steps()[..t]
            .iter()
            .map(|s| s.textual().prompt().to_owned())
            .collect();
        assert_eq!(prompts, &expected);
        let prior = t.checked_sub(1).map(|p| format!("feedback {p}"));
        assert_eq!(feedback, &prior);
    }
}

struct Flaky {
    failures: usize,
    calls: AtomicUsize,
}

impl Simulator for Flaky {
    fn id(&self) -> &str {
        "flaky"
    }
    fn simulate(&self, r: &SimulatorRequest<'_>) -> Result<VisualThought, BackendError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) < self.failures {
            return Err(BackendError::Unavailable("503".into()));
        }
        Blank.simulate(r)
    }
}

#[test]
fn transient_failures_are_retried() {
    let planner = ListPlanner(distinct_prompts(1));
    let sim = Flaky {
        failures: 3,
        calls: AtomicUsize::new(0),
    };
    let sleeper = RecordingSleeper::default();
    let backends = Backends {
        planner: &planner,
        simulator: &sim,
        critic: &Constant(1.0),
        answerer: &Echo,
    };
    let out = Orchestrator::new(backends, LoopConfig::default())
        .with_retry_policy(RetryPolicy::new(3).with_sleeper(Arc::new(sleeper.clone())))
        .run(&qa("x"))
        .unwrap();
    assert_eq!(out.reason(), TerminationReason::Converged);
    assert_eq!(sleeper.delays().len(), 3);
    assert_eq!(sim.calls.load(Ordering::SeqCst), 4);
}

struct FailAfter {
    ok_steps: usize,
    error: BackendError,
}

impl Simulator for FailAfter {
    fn id(&self) -> &str {
        "fail-after"
    }
    fn simulate(&self, r: &SimulatorRequest<'_>) -> Result<VisualThought, BackendError> {
        if r.prompt.step_index() >= self.ok_steps {
            return Err(self.error.clone());
        }
        Blank.simulate(r)
    }
}

#[test]
fn failure_after_scored_step_keeps_outcome() {
    let planner = ListPlanner(distinct_prompts(5));
    let sim = FailAfter {
        ok_steps: 2,
        error: BackendError::GenerationRejected("policy".into()),
    };
    let backends = Backends {
        planner: &planner,
        simulator: &sim,
        critic: &Constant(0.3),
        answerer: &Echo,
    };
    let out = Orchestrator::new(backends, LoopConfig::default())
        .with_retry_policy(no_retry())
        .run(&qa("x"))
        .unwrap();
    assert_eq!(out.reason(), TerminationReason::BudgetExhausted);
    assert!(out.failure().unwrap().contains("policy"));
    // the aborted step is kept, unscored
    assert_eq!(out.trajectory().len(), 3);
    assert!(out.trajectory().steps()[2].verification().is_none());
    assert_eq!(out.best_step(), 0);
}

#[test]
fn failure_before_any_score_is_an_error() {
    let planner = ListPlanner(distinct_prompts(1));
    let sim = FailAfter {
        ok_steps: 0,
        error: BackendError::Auth("401".into()),
    };
    let backends = Backends {
        planner: &planner,
        simulator: &sim,
        critic: &Constant(1.0),
        answerer: &Echo,
    };
    let err = Orchestrator::new(backends, LoopConfig::default())
        .with_retry_policy(no_retry())
        .run(&qa("x"))
        .unwrap_err();
    assert!(matches!(err.backend_error(), Some(BackendError::Auth(_))));
}

struct Silent;

impl Critic for Silent {
    fn id(&self) -> &str {
        "silent"
    }
    fn critique(&self, _: &CritiqueRequest<'_>) -> Result<Verification, BackendError> {
        Ok(Verification::new(0.4, None)?)
    }
}

#[test]
fn low_score_without_feedback_is_malformed() {
    let planner = ListPlanner(distinct_prompts(1));
    let backends = Backends {
        planner: &planner,
        simulator: &Blank,
        critic: &Silent,
        answerer: &Echo,
    };
    let err = Orchestrator::new(backends, LoopConfig::default())
        .with_retry_policy(no_retry())
        .run(&qa("x"))
        .unwrap_err();
    assert!(matches!(err.backend_error(), Some(BackendError::MalformedOutput(_))));
}

struct EmptyAnswer;

impl Answerer for EmptyAnswer {
    fn id(&self) -> &str {
        "empty"
    }
    fn answer(&self, _: &Query, _: &VisualThought) -> Result<String, BackendError> {
        Ok("  ".into())
    }
}

#[test]
fn empty_answer_is_malformed() {
    let planner = ListPlanner(distinct_prompts(1));
    let backends = Backends {
        planner: &planner,
        simulator: &Blank,
        critic: &Constant(1.0),
        answerer: &EmptyAnswer,
    };
    let err = Orchestrator::new(backends, LoopConfig::default())
        .with_retry_policy(no_retry())
        .run(&qa("x"))
        .unwrap_err();
    assert!(matches!(err.backend_error(), Some(BackendError::MalformedOutput(_))));
}

#[test]
fn invalid_config_is_rejected() {
    let planner = ListPlanner(distinct_prompts(1));
    let backends = Backends {
        planner: &planner,
        simulator: &Blank,
        critic: &Constant(1.0),
        answerer: &Echo,
    };
    let cfg = LoopConfig {
        max_iters: 0,
        ..LoopConfig::default()
    };
    assert!(matches!(
        Orchestrator::new(backends, cfg).run(&qa("x")),
        Err(RunError::InvalidConfig(_))
    ));
}

#[derive(Default)]
struct Collect(Vec<(usize, bool)>);

impl RunObserver for Collect {
    fn on_step(
        &mut self,
        state: &cothought_core::ReasoningState,
        outcome: Option<&cothought_core::Outcome>,
    ) -> Result<(), String> {
        self.0.push((state.step_index(), outcome.is_some()));
        Ok(())
    }
}

#[test]
fn observer_sees_every_step_once_and_outcome_last() {
    let planner = ListPlanner(distinct_prompts(5));
    let backends = Backends {
        planner: &planner,
        simulator: &Blank,
        critic: &Constant(0.5),
        answerer: &Echo,
    };
    let cfg = LoopConfig {
        max_iters: 5,
        ..LoopConfig::default()
    };
    let mut obs = Collect::default();
    Orchestrator::new(backends, cfg)
        .run_observed(&qa("x"), &mut obs)
        .unwrap();
    assert_eq!(
        obs.0,
        vec![(0, false), (1, false), (2, false), (3, false), (4, true)]
    );
}
