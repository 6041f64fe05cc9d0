//! Checkable predicates over a scene and the oracle scoring built on them.

use serde::{Deserialize, Serialize};

use super::scene::{Census, SceneDescription};
use super::script::Rgb;
use crate::geometry::{Line, EPSILON};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// The scene's script contains this cut (either orientation). `number`
    /// is the 1-based position of the cut in the task's reference script.
    CutPresent { number: usize, line: Line },
    RegionColored { index: usize, color: Rgb },
    ExpectedCensus { census: Census },
    CutCount { count: usize },
    AreaOf { index: usize, value: f64, tolerance: f64 },
}

fn same_line(a: &Line, b: &Line) -> bool {
    let close = |p: crate::geometry::Point, q: crate::geometry::Point| p.distance(q) <= EPSILON;
    (close(a.from, b.from) && close(a.to, b.to)) || (close(a.from, b.to) && close(a.to, b.from))
}

impl Constraint {
    /// Stable machine-readable identifier used as the feedback prefix.
    pub fn id(&self) -> String {
        match self {
            Constraint::CutPresent { number, .. } => format!("missing-cut-{number}"),
            Constraint::RegionColored { index, .. } => format!("region-color-{index}"),
            Constraint::ExpectedCensus { .. } => "census".to_string(),
            Constraint::CutCount { .. } => "cut-count".to_string(),
            Constraint::AreaOf { index, .. } => format!("area-{index}"),
        }
    }

    pub fn is_satisfied(&self, scene: &SceneDescription) -> bool {
        match self {
            Constraint::CutPresent { line, .. } => {
                scene.provenance().cuts().any(|c| same_line(c, line))
            }
            Constraint::RegionColored { index, color } => scene
                .regions()
                .get(*index)
                .is_some_and(|r| r.color == Some(*color)),
            Constraint::ExpectedCensus { census } => scene.census() == *census,
            Constraint::CutCount { count } => scene.provenance().cuts().count() == *count,
            Constraint::AreaOf {
                index,
                value,
                tolerance,
            } => scene
                .regions()
                .get(*index)
                .is_some_and(|r| (r.polygon.area() - value).abs() <= *tolerance),
        }
    }

    /// Human-readable account of how `scene` violates this predicate.
    pub fn describe_violation(&self, scene: &SceneDescription) -> String {
        match self {
            Constraint::CutPresent { number, line } => format!(
                "cut {number} from ({}, {}) to ({}, {}) is absent or misplaced",
                line.from.x, line.from.y, line.to.x, line.to.y
            ),
            Constraint::RegionColored { index, color } => match scene.regions().get(*index) {
                None => format!("region {index} does not exist; it should be colored {color}"),
                Some(r) => match r.color {
                    None => format!("region {index} is uncolored; it should be {color}"),
                    Some(c) => format!("region {index} is colored {c}; it should be {color}"),
                },
            },
            Constraint::ExpectedCensus { census } => {
                format!("the regions are {}; expected {census}", scene.census())
            }
            Constraint::CutCount { count } => format!(
                "the script has {} cuts; expected {count}",
                scene.provenance().cuts().count()
            ),
            Constraint::AreaOf { index, value, .. } => match scene.regions().get(*index) {
                None => format!("region {index} does not exist; expected area {value}"),
                Some(r) => format!(
                    "region {index} has area {:.6}; expected {value}",
                    r.polygon.area()
                ),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintSet(pub Vec<Constraint>);

/// Result of checking a scene against a constraint set.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleVerdict {
    pub satisfied: usize,
    pub total: usize,
    /// `"<id>: <description>"` for the lowest-indexed violated predicate.
    pub feedback: Option<String>,
}

impl OracleVerdict {
    /// Fraction of satisfied predicates; an empty set counts as fully satisfied.
    pub fn score(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.satisfied as f64 / self.total as f64
        }
    }
}

impl ConstraintSet {
    pub fn evaluate(&self, scene: &SceneDescription) -> OracleVerdict {
        let mut satisfied = 0;
        let mut feedback = None;
        for c in &self.0 {
            if c.is_satisfied(scene) {
                satisfied += 1;
            } else if feedback.is_none() {
                feedback = Some(format!("{}: {}", c.id(), c.describe_violation(scene)));
            }
        }
        OracleVerdict {
            satisfied,
            total: self.0.len(),
            feedback,
        }
    }
}

/// Normalizes a feedback string to the identifier it starts with:
/// text before the first `:`, lowercased, with whitespace runs as `-`.
pub fn feedback_id(feedback: &str) -> String {
    let head = feedback.split(':').next().unwrap_or("");
    head.split_whitespace()
        .collect::<Vec<_>>()
        .join("-")
        .to_ascii_lowercase()
}
