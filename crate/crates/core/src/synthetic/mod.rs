//! A deterministic 2-D world for closed-loop testing: scene scripts cut and
//! color the unit square, an exact-enough polygon engine realizes them, and
//! oracle backends plan, render and score without any model.

mod backends;
mod constraints;
mod render;
mod scene;
mod script;
mod tasks;

pub use backends::{oracle_critique, CensusAnswerer, OracleCritic, SceneSimulator, ScriptedPlanner};
pub use constraints::{feedback_id, Constraint, ConstraintSet, OracleVerdict};
pub use render::render_scene;
pub use scene::{apply_script, Census, Region, SceneDescription, SceneError};
pub use script::{Rgb, SceneOp, SceneScript, ScriptError};
pub use tasks::{
    global_corrections, quarters_task, square_cuts_task, stack_task, Correction, FaultError,
    FaultKind, FaultPlan, FaultSpec, Repair, Task, TaskLibrary,
};
