//! Offline backends over the synthetic world: a scripted planner that edits
//! its scene script from oracle feedback, a simulator that builds and renders
//! the scripted scene, and an oracle critic/answerer that read the scene
//! metadata directly.

use std::sync::Arc;

use super::constraints::{feedback_id, ConstraintSet};
use super::render::render_scene;
use super::scene::apply_script;
use super::script::SceneScript;
use super::tasks::{Correction, FaultPlan, FaultSpec, Repair, Task, TaskLibrary};
use crate::backend::{
    Answerer, BackendError, CritiqueRequest, Critic, Planner, PlannerRequest, Simulator,
    SimulatorRequest,
};
use crate::state::{ImagePayload, Query, TextualThought, Verification, VisualThought};

#[derive(Debug, Clone)]
enum Faults {
    None,
    Seeded(FaultSpec),
    Explicit(FaultPlan),
}

/// Deterministic planner: emits the task's reference script (optionally with
/// injected faults) at step 0 and repairs one fault per recognized feedback.
#[derive(Debug, Clone)]
pub struct ScriptedPlanner {
    library: Arc<TaskLibrary>,
    faults: Faults,
}

impl ScriptedPlanner {
    pub fn new(library: Arc<TaskLibrary>) -> Self {
        Self {
            library,
            faults: Faults::None,
        }
    }

    pub fn with_faults(mut self, spec: Option<FaultSpec>) -> Self {
        self.faults = match spec {
            Some(s) if s.count > 0 => Faults::Seeded(s),
            _ => Faults::None,
        };
        self
    }

    pub fn with_fault_plan(mut self, plan: FaultPlan) -> Self {
        self.faults = Faults::Explicit(plan);
        self
    }

    fn fault_plan(&self, task: &Task) -> Result<FaultPlan, BackendError> {
        let plan = match &self.faults {
            Faults::None => return Ok(FaultPlan::default()),
            Faults::Seeded(spec) => spec.plan(task),
            Faults::Explicit(plan) => plan.validate(task).map(|_| plan.clone()),
        };
        plan.map_err(|e| BackendError::InvalidRequest(e.to_string()))
    }

    fn resolve(task: &Task, feedback: &str) -> Result<Correction, BackendError> {
        let id = feedback_id(feedback);
        task.correction(&id)
            .ok_or_else(|| BackendError::UnrecognizedFeedback(feedback.to_string()))
    }
}

/// Renders the planner prompt: comment header, script, and the fix note.
fn render_prompt(task: &Task, script: &SceneScript, fix: Option<&Correction>) -> String {
    let mut out = format!("# task: {}\n# scene: {}\n", task.key, task.description);
    out.push_str(&script.to_string());
    if let Some(c) = fix {
        out.push_str(&format!("# fix {}: {}\n", c.id, c.note));
    }
    out
}

impl Planner for ScriptedPlanner {
    fn id(&self) -> &str {
        "synthetic-planner"
    }

    fn plan(&self, request: &PlannerRequest<'_>) -> Result<TextualThought, BackendError> {
        let task = self
            .library
            .lookup(request.query)
            .ok_or_else(|| BackendError::UnknownTask(request.query.id().to_string()))?;
        let plan = self.fault_plan(task)?;

        // every correction requested so far, oldest first
        let mut corrections = Vec::new();
        for step in request.history {
            if let Some(fb) = step.verification().and_then(Verification::feedback) {
                corrections.push(Self::resolve(task, fb)?);
            }
        }
        let latest = match request.prior_feedback {
            Some(fb) => {
                let c = Self::resolve(task, fb)?;
                if corrections.last() != Some(&c) {
                    corrections.push(c.clone());
                }
                Some(c)
            }
            None => None,
        };

        let mut repaired = Vec::new();
        for c in &corrections {
            match c.repair {
                Repair::RestoreSlot(slot) => repaired.push(slot),
                Repair::RestoreAll => repaired.extend(0..task.script.ops.len()),
            }
        }
        let script = plan.apply(&task.script, &repaired);
        let prompt = render_prompt(task, &script, latest.as_ref());
        Ok(TextualThought::new(request.step_index(), prompt)?)
    }
}

/// Builds the scene from the script embedded in the prompt and renders it.
#[derive(Debug, Clone)]
pub struct SceneSimulator {
    width: u32,
    height: u32,
}

impl SceneSimulator {
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "render size must be positive");
        Self { width, height }
    }
}

impl Default for SceneSimulator {
    fn default() -> Self {
        Self::new(256, 256)
    }
}

impl Simulator for SceneSimulator {
    fn id(&self) -> &str {
        "synthetic-simulator"
    }

    /// The output depends only on the prompt; the seed has nothing to vary.
    fn simulate(&self, request: &SimulatorRequest<'_>) -> Result<VisualThought, BackendError> {
        let script = SceneScript::parse(request.prompt.prompt())
            .map_err(|e| BackendError::GenerationRejected(e.to_string()))?;
        let scene =
            apply_script(&script).map_err(|e| BackendError::GenerationRejected(e.to_string()))?;
        let image = render_scene(&scene, self.width, self.height);
        Ok(VisualThought::new(
            request.prompt.step_index(),
            ImagePayload::Inline(image),
            self.id(),
        )
        .with_scene(Some(scene)))
    }
}

/// Scores a visual thought as the fraction of satisfied predicates.
pub fn oracle_critique(
    request: &CritiqueRequest<'_>,
    constraints: &ConstraintSet,
) -> Result<Verification, BackendError> {
    let scene = request.visual.scene().ok_or(BackendError::MissingScene)?;
    let verdict = constraints.evaluate(scene);
    Ok(Verification::new(verdict.score(), verdict.feedback)?)
}

#[derive(Debug, Clone)]
pub struct OracleCritic {
    library: Arc<TaskLibrary>,
}

impl OracleCritic {
    pub fn new(library: Arc<TaskLibrary>) -> Self {
        Self { library }
    }
}

impl Critic for OracleCritic {
    fn id(&self) -> &str {
        "oracle-critic"
    }

    fn critique(&self, request: &CritiqueRequest<'_>) -> Result<Verification, BackendError> {
        if request.visual.scene().is_none() {
            return Err(BackendError::MissingScene);
        }
        let task = self
            .library
            .lookup(request.query)
            .ok_or_else(|| BackendError::UnknownTask(request.query.id().to_string()))?;
        oracle_critique(request, &task.constraints)
    }
}

/// Answers with the shape census of the scene, e.g. `2 triangles, 1 pentagon`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CensusAnswerer;

impl Answerer for CensusAnswerer {
    fn id(&self) -> &str {
        "oracle-answerer"
    }

    fn answer(&self, _query: &Query, best: &VisualThought) -> Result<String, BackendError> {
        let scene = best.scene().ok_or(BackendError::MissingScene)?;
        Ok(scene.census().to_string())
    }
}
