//! Many independent runs at once. Runs share nothing but the read-only task
//! library, so a sweep maps cleanly onto a thread pool. With the `parallel`
//! feature off, [`Execution::Parallel`] quietly runs sequentially.

use std::sync::Arc;

use serde::Serialize;

use crate::backend::Backends;
use crate::orchestrator::{LoopConfig, Orchestrator, RunError};
use crate::state::TerminationReason;
use crate::synthetic::{
    CensusAnswerer, FaultSpec, OracleCritic, SceneSimulator, ScriptedPlanner, TaskLibrary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Applies `f` to every item, preserving order.
pub fn map_items<T, R, F>(items: &[T], execution: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepCase {
    pub task: String,
    pub faults: FaultSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub case: SweepCase,
    pub reason: Option<TerminationReason>,
    pub steps: usize,
    pub best_score: Option<f64>,
    pub error: Option<String>,
}

/// Every `(task, fault count, seed)` combination.
pub fn sweep_cases(tasks: &[&str], fault_counts: &[usize], seeds: std::ops::Range<u64>) -> Vec<SweepCase> {
    let mut cases = Vec::new();
    for task in tasks {
        for &count in fault_counts {
            for seed in seeds.clone() {
                cases.push(SweepCase {
                    task: task.to_string(),
                    faults: FaultSpec { count, seed },
                });
            }
        }
    }
    cases
}

/// Runs one synthetic loop per case. Retries are disabled: the synthetic
/// backends never fail transiently.
pub fn run_sweep(
    library: Arc<TaskLibrary>,
    cases: &[SweepCase],
    config: LoopConfig,
    image_size: u32,
    execution: Execution,
) -> Vec<SweepResult> {
    let simulator = SceneSimulator::new(image_size, image_size);
    let critic = OracleCritic::new(library.clone());
    let answerer = CensusAnswerer;
    let config = LoopConfig {
        transport_retries: 0,
        ..config
    };
    map_items(cases, execution, |case| {
        let planner = ScriptedPlanner::new(library.clone()).with_faults(Some(case.faults));
        let backends = Backends {
            planner: &planner,
            simulator: &simulator,
            critic: &critic,
            answerer: &answerer,
        };
        let result = library
            .get(&case.task)
            .ok_or_else(|| RunError::InvalidConfig(format!("unknown task {}", case.task)))
            .and_then(|task| Ok(task.query()?))
            .and_then(|query| Orchestrator::new(backends, config).run(&query));
        match result {
            Ok(outcome) => SweepResult {
                case: case.clone(),
                reason: Some(outcome.reason()),
                steps: outcome.trajectory().len(),
                best_score: Some(outcome.best_score()),
                error: None,
            },
            Err(e) => SweepResult {
                case: case.clone(),
                reason: None,
                steps: 0,
                best_score: None,
                error: Some(e.to_string()),
            },
        }
    })
}
