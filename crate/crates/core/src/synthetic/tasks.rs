//! The task library: queries paired with reference scene scripts, the
//! predicates a correct scene satisfies, and the corrective edit for each
//! predicate. Also seeded fault injection over reference scripts.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::constraints::{Constraint, ConstraintSet};
use super::scene::{apply_script, Census};
use super::script::{Rgb, SceneOp, SceneScript};
use crate::geometry::{Line, Point, ShapeClass};
use crate::state::{Query, StateError, TaskMode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaultError {
    #[error("task {task} has {available} fault-injectable operations, {requested} requested")]
    TooManyFaults {
        task: String,
        available: usize,
        requested: usize,
    },
    #[error("could not find a consistent fault plan for task {0}")]
    NoConsistentPlan(String),
    #[error("fault slot {slot} is out of range for task {task}")]
    InvalidSlot { task: String, slot: usize },
}

/// What a corrective edit does to the planner's current script.
#[derive(Debug, Clone, PartialEq)]
pub enum Repair {
    /// Reinstate the reference operation at this slot.
    RestoreSlot(usize),
    /// Reinstate the whole reference script.
    RestoreAll,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub id: String,
    pub repair: Repair,
    pub note: String,
}

/// Corrections recognized for every task.
pub fn global_corrections() -> Vec<Correction> {
    vec![Correction {
        id: "object-floating".into(),
        repair: Repair::RestoreAll,
        note: "ground every object so it rests on the surface directly below it".into(),
    }]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub key: String,
    pub query_text: String,
    pub mode: TaskMode,
    /// One-line scene summary written into every planner prompt.
    pub description: String,
    pub script: SceneScript,
    pub constraints: ConstraintSet,
}

impl Task {
    pub fn query(&self) -> Result<Query, StateError> {
        Query::new(&self.key, &self.query_text, self.mode)
    }

    pub fn with_mode(mut self, mode: TaskMode) -> Self {
        self.mode = mode;
        self
    }

    /// Slot in the reference script repaired by fixing `constraint`, if the
    /// predicate maps onto a single operation.
    fn slot_for(&self, constraint: &Constraint) -> Option<usize> {
        match constraint {
            Constraint::CutPresent { number, .. } => self
                .script
                .ops
                .iter()
                .enumerate()
                .filter(|(_, op)| matches!(op, SceneOp::Cut { .. }))
                .nth(number.checked_sub(1)?)
                .map(|(slot, _)| slot),
            Constraint::RegionColored { index, color } => {
                self.script.ops.iter().position(|op| {
                    matches!(op, SceneOp::Color { region, color: c } if region == index && c == color)
                })
            }
            _ => None,
        }
    }

    /// Slots that fault injection may omit or perturb.
    pub fn fault_slots(&self) -> Vec<usize> {
        let mut slots: Vec<usize> = self
            .constraints
            .0
            .iter()
            .filter_map(|c| self.slot_for(c))
            .collect();
        slots.sort_unstable();
        slots.dedup();
        slots
    }

    pub fn corrections(&self) -> Vec<Correction> {
        let mut out: Vec<Correction> = self
            .constraints
            .0
            .iter()
            .map(|c| match self.slot_for(c) {
                Some(slot) => Correction {
                    id: c.id(),
                    repair: Repair::RestoreSlot(slot),
                    note: format!("restore `{}`", self.script.ops[slot]),
                },
                None => Correction {
                    id: c.id(),
                    repair: Repair::RestoreAll,
                    note: "rebuild the full construction from the query".into(),
                },
            })
            .collect();
        out.extend(global_corrections());
        out
    }

    pub fn correction(&self, id: &str) -> Option<Correction> {
        self.corrections().into_iter().find(|c| c.id == id)
    }
}

fn cut(x0: f64, y0: f64, x1: f64, y1: f64) -> SceneOp {
    SceneOp::cut(x0, y0, x1, y1).expect("built-in cuts are valid chords")
}

fn cut_constraints(script: &SceneScript) -> Vec<Constraint> {
    script
        .cuts()
        .enumerate()
        .map(|(i, line)| Constraint::CutPresent {
            number: i + 1,
            line: *line,
        })
        .collect()
}

/// Square cut vertically through its center, along the rising diagonal and
/// horizontally at a quarter height; the first region is then colored.
pub fn square_cuts_task() -> Task {
    let red = Rgb([220, 60, 60]);
    let script = SceneScript::new(vec![
        cut(0.5, 0.0, 0.5, 1.0),
        cut(0.0, 0.0, 1.0, 1.0),
        cut(0.0, 0.25, 1.0, 0.25),
        SceneOp::Color {
            region: 0,
            color: red,
        },
    ]);
    let mut constraints = cut_constraints(&script);
    constraints.push(Constraint::RegionColored {
        index: 0,
        color: red,
    });
    constraints.push(Constraint::ExpectedCensus {
        census: Census::from_counts(&[
            (ShapeClass::Triangle, 3),
            (ShapeClass::Rectangle, 1),
            (ShapeClass::Quadrilateral, 2),
            (ShapeClass::Pentagon, 1),
        ]),
    });
    constraints.push(Constraint::CutCount { count: 3 });
    Task {
        key: "fig2-square-cuts".into(),
        query_text: "Cut a square with a vertical line through its center, then along the \
                     diagonal from the bottom-left to the top-right corner, then with a \
                     horizontal line at one quarter of its height, and color the first \
                     region. How many triangles, rectangles, quadrilaterals and pentagons \
                     are there?"
            .into(),
        mode: TaskMode::QuestionAnswering,
        description: "square: vertical cut at x=0.5, diagonal cut, horizontal cut at y=0.25, \
                      first region colored"
            .into(),
        script,
        constraints: ConstraintSet(constraints),
    }
}

/// Block A resting on block B, drawn as two stacked halves.
pub fn stack_task() -> Task {
    let a = Rgb([200, 40, 40]);
    let b = Rgb([40, 40, 200]);
    let script = SceneScript::new(vec![
        cut(0.0, 0.5, 1.0, 0.5),
        SceneOp::Color {
            region: 0,
            color: a,
        },
        SceneOp::Color {
            region: 1,
            color: b,
        },
    ]);
    let mut constraints = cut_constraints(&script);
    constraints.push(Constraint::RegionColored { index: 0, color: a });
    constraints.push(Constraint::RegionColored { index: 1, color: b });
    constraints.push(Constraint::ExpectedCensus {
        census: Census::from_counts(&[(ShapeClass::Rectangle, 2)]),
    });
    Task {
        key: "stack-a-on-b".into(),
        query_text: "stack A on B".into(),
        mode: TaskMode::VisualGeneration,
        description: "block A (red, region 0) rests on top of block B (blue, region 1)".into(),
        script,
        constraints: ConstraintSet(constraints),
    }
}

/// Square quartered by its two midlines.
pub fn quarters_task() -> Task {
    let script = SceneScript::new(vec![cut(0.5, 0.0, 0.5, 1.0), cut(0.0, 0.5, 1.0, 0.5)]);
    let mut constraints = cut_constraints(&script);
    constraints.push(Constraint::ExpectedCensus {
        census: Census::from_counts(&[(ShapeClass::Rectangle, 4)]),
    });
    constraints.push(Constraint::CutCount { count: 2 });
    constraints.push(Constraint::AreaOf {
        index: 0,
        value: 0.25,
        tolerance: 1e-9,
    });
    Task {
        key: "square-quarters".into(),
        query_text: "Cut a square along both of its midlines. What shapes result?".into(),
        mode: TaskMode::QuestionAnswering,
        description: "square: vertical cut at x=0.5, horizontal cut at y=0.5".into(),
        script,
        constraints: ConstraintSet(constraints),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskLibrary {
    tasks: Vec<Task>,
}

impl TaskLibrary {
    pub fn new(tasks: Vec<Task>) -> Self {
        Self { tasks }
    }

    pub fn builtin() -> Self {
        Self::new(vec![square_cuts_task(), stack_task(), quarters_task()])
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn get(&self, key: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.key == key)
    }

    /// Resolves a query by id, then by case-insensitive query text.
    pub fn lookup(&self, query: &Query) -> Option<&Task> {
        self.get(query.id()).or_else(|| {
            let text = query.text().trim();
            self.tasks
                .iter()
                .find(|t| t.query_text.eq_ignore_ascii_case(text) || t.key == text)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    Omit,
    Replace { op: SceneOp },
}

/// Concrete faults keyed by reference-script slot.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FaultPlan {
    pub faults: BTreeMap<usize, FaultKind>,
}

impl FaultPlan {
    pub fn omit(slots: &[usize]) -> Self {
        Self {
            faults: slots.iter().map(|&s| (s, FaultKind::Omit)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.faults.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }

    /// The reference script with every fault not in `repaired` applied.
    pub fn apply(&self, reference: &SceneScript, repaired: &[usize]) -> SceneScript {
        let ops = reference
            .ops
            .iter()
            .enumerate()
            .filter_map(|(slot, op)| {
                if repaired.contains(&slot) {
                    return Some(op.clone());
                }
                match self.faults.get(&slot) {
                    None => Some(op.clone()),
                    Some(FaultKind::Omit) => None,
                    Some(FaultKind::Replace { op }) => Some(op.clone()),
                }
            })
            .collect();
        SceneScript::new(ops)
    }

    /// Every partially repaired script must still build a scene.
    fn is_consistent(&self, reference: &SceneScript) -> bool {
        let slots: Vec<usize> = self.faults.keys().copied().collect();
        (0u32..1 << slots.len()).all(|mask| {
            let repaired: Vec<usize> = slots
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, s)| *s)
                .collect();
            apply_script(&self.apply(reference, &repaired)).is_ok()
        })
    }

    pub fn validate(&self, task: &Task) -> Result<(), FaultError> {
        if let Some(&slot) = self.faults.keys().find(|s| **s >= task.script.ops.len()) {
            return Err(FaultError::InvalidSlot {
                task: task.key.clone(),
                slot,
            });
        }
        if self.is_consistent(&task.script) {
            Ok(())
        } else {
            Err(FaultError::NoConsistentPlan(task.key.clone()))
        }
    }
}

/// Seeded request for `count` independent faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub count: usize,
    pub seed: u64,
}

const PLAN_ATTEMPTS: usize = 256;

fn perimeter_position(p: Point) -> Option<f64> {
    const E: f64 = 1e-12;
    if p.y.abs() < E && (0.0..=1.0).contains(&p.x) {
        Some(p.x)
    } else if (p.x - 1.0).abs() < E && (0.0..=1.0).contains(&p.y) {
        Some(1.0 + p.y)
    } else if (p.y - 1.0).abs() < E && (0.0..=1.0).contains(&p.x) {
        Some(3.0 - p.x)
    } else if p.x.abs() < E && (0.0..=1.0).contains(&p.y) {
        Some(4.0 - p.y)
    } else {
        None
    }
}

fn perimeter_point(s: f64) -> Point {
    let s = s.rem_euclid(4.0);
    let round = |v: f64| (v * 1000.0).round() / 1000.0;
    match s {
        s if s < 1.0 => Point::new(round(s), 0.0),
        s if s < 2.0 => Point::new(1.0, round(s - 1.0)),
        s if s < 3.0 => Point::new(round(3.0 - s), 1.0),
        s => Point::new(0.0, round(4.0 - s)),
    }
}

fn offset(rng: &mut ChaCha8Rng) -> f64 {
    let magnitude = rng.random_range(0.05..0.2);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

fn perturb_cut(line: &Line, rng: &mut ChaCha8Rng) -> Option<SceneOp> {
    let (from, to) = match (perimeter_position(line.from), perimeter_position(line.to)) {
        (Some(a), Some(b)) => (
            perimeter_point(a + offset(rng)),
            perimeter_point(b + offset(rng)),
        ),
        _ => {
            let (dx, dy) = (offset(rng), offset(rng));
            (
                Point::new(line.from.x + dx, line.from.y + dy),
                Point::new(line.to.x + dx, line.to.y + dy),
            )
        }
    };
    if from.distance(line.from).min(from.distance(line.to)) < 1e-2
        && to.distance(line.to).min(to.distance(line.from)) < 1e-2
    {
        return None;
    }
    SceneOp::cut(from.x, from.y, to.x, to.y).ok()
}

fn recolor(color: Rgb, rng: &mut ChaCha8Rng) -> Rgb {
    loop {
        let c = Rgb(rng.random());
        if c != color && c != Rgb::WHITE {
            return c;
        }
    }
}

impl FaultSpec {
    /// Draws `count` distinct injectable slots and omits or perturbs each one,
    /// redrawing until every partially repaired script is buildable.
    pub fn plan(&self, task: &Task) -> Result<FaultPlan, FaultError> {
        let slots = task.fault_slots();
        if self.count > slots.len() {
            return Err(FaultError::TooManyFaults {
                task: task.key.clone(),
                available: slots.len(),
                requested: self.count,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..PLAN_ATTEMPTS {
            let mut chosen: Vec<usize> = index::sample(&mut rng, slots.len(), self.count)
                .into_iter()
                .map(|i| slots[i])
                .collect();
            chosen.sort_unstable();
            let mut plan = FaultPlan::default();
            for slot in chosen {
                let kind = if rng.random_bool(0.5) {
                    FaultKind::Omit
                } else {
                    match &task.script.ops[slot] {
                        SceneOp::Cut { line } => match perturb_cut(line, &mut rng) {
                            Some(op) => FaultKind::Replace { op },
                            None => FaultKind::Omit,
                        },
                        SceneOp::Color { region, color } => FaultKind::Replace {
                            op: SceneOp::Color {
                                region: *region,
                                color: recolor(*color, &mut rng),
                            },
                        },
                    }
                };
                plan.faults.insert(slot, kind);
            }
            if plan.is_consistent(&task.script) {
                return Ok(plan);
            }
        }
        Err(FaultError::NoConsistentPlan(task.key.clone()))
    }
}
