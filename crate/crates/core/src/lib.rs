//! Interleaved textual and visual reasoning: a planner writes a prompt, a
//! simulator renders it, a critic scores the render, and the loop refines
//! until the score clears a threshold, the budget runs out, or the prompts
//! start repeating.
//!
//! The [`synthetic`] module provides a fully deterministic world (polygon
//! cuts of the unit square) with oracle backends, so every stage of the loop
//! can be checked without a model.

pub mod backend;
pub mod batch;
pub mod geometry;
pub mod orchestrator;
pub mod raster;
pub mod state;
pub mod store;
pub mod synthetic;

pub use backend::{
    Answerer, BackendError, Backends, Critic, CritiqueRequest, Planner, PlannerRequest,
    Simulator, SimulatorRequest,
};
pub use orchestrator::{run, LoopConfig, Orchestrator, RunError, RunObserver};
pub use raster::RasterImage;
pub use state::{
    ImagePayload, LayoutBox, LayoutConstraints, Outcome, Query, ReasoningState, StateError,
    TaskMode, TerminationReason, TextualThought, Trajectory, Verification, VisualThought,
};
