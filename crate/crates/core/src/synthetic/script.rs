//! The scene-script language: one operation per line.
//!
//! ```text
//! # comments run to the end of the line
//! CUT 0.5 0 0.5 1      # full chord through the unit square
//! COLOR 0 220 60 60    # region index, then r g b
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Line, Point, EPSILON};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cut endpoint ({x}, {y}) lies inside the unit square")]
    EndpointInside { x: f64, y: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const BLACK: Rgb = Rgb([0, 0, 0]);
    pub const WHITE: Rgb = Rgb([255, 255, 255]);
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [r, g, b] = self.0;
        write!(f, "{r} {g} {b}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SceneOp {
    Cut { line: Line },
    Color { region: usize, color: Rgb },
}

impl SceneOp {
    /// A cut whose endpoints must sit on or outside the square's boundary.
    pub fn cut(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, ScriptError> {
        for (x, y) in [(x0, y0), (x1, y1)] {
            let outside = (x - 0.5).abs().max((y - 0.5).abs()) >= 0.5 - EPSILON;
            if !outside {
                return Err(ScriptError::EndpointInside { x, y });
            }
        }
        Ok(SceneOp::Cut {
            line: Line::new(Point::new(x0, y0), Point::new(x1, y1))?,
        })
    }

    pub fn color(region: usize, rgb: [u8; 3]) -> Self {
        SceneOp::Color {
            region,
            color: Rgb(rgb),
        }
    }
}

impl fmt::Display for SceneOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneOp::Cut { line } => write!(
                f,
                "CUT {} {} {} {}",
                line.from.x, line.from.y, line.to.x, line.to.y
            ),
            SceneOp::Color { region, color } => write!(f, "COLOR {region} {color}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneScript {
    pub ops: Vec<SceneOp>,
}

impl SceneScript {
    pub fn new(ops: Vec<SceneOp>) -> Self {
        Self { ops }
    }

    pub fn cuts(&self) -> impl Iterator<Item = &Line> {
        self.ops.iter().filter_map(|op| match op {
            SceneOp::Cut { line } => Some(line),
            SceneOp::Color { .. } => None,
        })
    }

    /// Parses script text; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut ops = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |message: String| ScriptError::Parse {
                line: line_no,
                message,
            };
            let mut words = body.split_whitespace();
            let keyword = words.next().unwrap_or_default();
            let args: Vec<&str> = words.collect();
            match keyword.to_ascii_uppercase().as_str() {
                "CUT" => {
                    if args.len() != 4 {
                        return Err(err(format!("CUT takes 4 numbers, got {}", args.len())));
                    }
                    let nums = args
                        .iter()
                        .map(|a| {
                            a.parse::<f64>()
                                .ok()
                                .filter(|v| v.is_finite())
                                .ok_or_else(|| err(format!("not a number: {a:?}")))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let op = SceneOp::cut(nums[0], nums[1], nums[2], nums[3]).map_err(|e| match e {
                        ScriptError::Parse { .. } => e,
                        other => err(other.to_string()),
                    })?;
                    ops.push(op);
                }
                "COLOR" => {
                    if args.len() != 4 {
                        return Err(err(format!("COLOR takes 4 integers, got {}", args.len())));
                    }
                    let region = args[0]
                        .parse::<usize>()
                        .map_err(|_| err(format!("bad region index: {:?}", args[0])))?;
                    let mut rgb = [0u8; 3];
                    for (slot, a) in rgb.iter_mut().zip(&args[1..]) {
                        *slot = a
                            .parse::<u8>()
                            .map_err(|_| err(format!("bad color channel: {a:?}")))?;
                    }
                    ops.push(SceneOp::color(region, rgb));
                }
                other => return Err(err(format!("unknown operation {other:?}"))),
            }
        }
        Ok(Self { ops })
    }
}

impl fmt::Display for SceneScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in &self.ops {
            writeln!(f, "{op}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_whitespace_and_comments() {
        let text = "  # header\n\ncut 0.5   0 0.5 1  # vertical\n\tCOLOR 0 1 2 3\n";
        let s = SceneScript::parse(text).unwrap();
        assert_eq!(s.ops.len(), 2);
        assert_eq!(s.ops[1], SceneOp::color(0, [1, 2, 3]));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = SceneScript::parse("CUT 0 0 1 1\nCUT 0 0 1\n").unwrap_err();
        assert!(matches!(e, ScriptError::Parse { line: 2, .. }));
        let e = SceneScript::parse("COLOR 0 300 0 0").unwrap_err();
        assert!(matches!(e, ScriptError::Parse { line: 1, .. }));
        let e = SceneScript::parse("ROTATE 90").unwrap_err();
        assert!(matches!(e, ScriptError::Parse { line: 1, .. }));
    }

    #[test]
    fn interior_endpoints_are_rejected() {
        assert!(matches!(
            SceneOp::cut(0.5, 0.5, 1.0, 1.0),
            Err(ScriptError::EndpointInside { .. })
        ));
        assert!(SceneOp::cut(-1.0, 0.2, 2.0, 0.3).is_ok());
        assert!(SceneScript::parse("CUT 0.2 0.3 1 1").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip(
            cuts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..6),
            colors in prop::collection::vec((0usize..8, any::<[u8; 3]>()), 0..4),
        ) {
            let mut ops: Vec<SceneOp> = cuts
                .into_iter()
                .map(|(a, b)| SceneOp::cut(a, 0.0, b, 1.0 + 1e-3).unwrap())
                .collect();
            ops.extend(colors.into_iter().map(|(r, c)| SceneOp::color(r, c)));
            let script = SceneScript::new(ops);
            prop_assert_eq!(SceneScript::parse(&script.to_string()).unwrap(), script);
        }
    }
}
