use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::script::{Rgb, SceneOp, SceneScript};
use crate::geometry::{GeometryError, Polygon, ShapeClass};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("cut {cut}: {source}")]
    Cut {
        cut: usize,
        #[source]
        source: GeometryError,
    },
    #[error("COLOR refers to region {index} but the scene has {regions} regions")]
    InvalidRegionIndex { index: usize, regions: usize },
}

impl SceneError {
    pub fn is_degenerate_cut(&self) -> bool {
        matches!(
            self,
            SceneError::Cut {
                source: GeometryError::DegenerateCut,
                ..
            }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub polygon: Polygon,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Rgb>,
}

/// A partition of the unit square together with the script that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    regions: Vec<Region>,
    provenance: SceneScript,
}

impl SceneDescription {
    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn provenance(&self) -> &SceneScript {
        &self.provenance
    }

    pub fn total_area(&self) -> f64 {
        self.regions.iter().map(|r| r.polygon.area()).sum()
    }

    pub fn census(&self) -> Census {
        Census::from_classes(self.regions.iter().map(|r| r.polygon.classify()))
    }
}

/// Applies the script to the unit square.
///
/// Each cut splits every region its line passes through; a split region is
/// replaced in place by its two pieces (left of the cut direction first) and
/// both pieces inherit its color.
pub fn apply_script(script: &SceneScript) -> Result<SceneDescription, SceneError> {
    let mut regions = vec![Region {
        polygon: Polygon::unit_square(),
        color: None,
    }];
    let mut cut_no = 0;
    for op in &script.ops {
        match op {
            SceneOp::Cut { line } => {
                cut_no += 1;
                let mut next = Vec::with_capacity(regions.len() * 2);
                for region in regions {
                    let pieces = region
                        .polygon
                        .split(line)
                        .map_err(|source| SceneError::Cut {
                            cut: cut_no,
                            source,
                        })?;
                    next.extend(pieces.into_iter().map(|polygon| Region {
                        polygon,
                        color: region.color,
                    }));
                }
                regions = next;
            }
            SceneOp::Color { region, color } => {
                let n = regions.len();
                let target = regions
                    .get_mut(*region)
                    .ok_or(SceneError::InvalidRegionIndex {
                        index: *region,
                        regions: n,
                    })?;
                target.color = Some(*color);
            }
        }
    }
    Ok(SceneDescription {
        regions,
        provenance: script.clone(),
    })
}

/// Multiset of shape classes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Census(BTreeMap<ShapeClass, usize>);

impl Census {
    pub fn from_classes(classes: impl IntoIterator<Item = ShapeClass>) -> Self {
        let mut map = BTreeMap::new();
        for c in classes {
            *map.entry(c).or_insert(0) += 1;
        }
        Self(map)
    }

    pub fn from_counts(counts: &[(ShapeClass, usize)]) -> Self {
        Self(
            counts
                .iter()
                .filter(|(_, n)| *n > 0)
                .map(|&(c, n)| (c, n))
                .collect(),
        )
    }

    pub fn count(&self, class: ShapeClass) -> usize {
        self.0.get(&class).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }
}

impl fmt::Display for Census {
    /// `3 triangles, 1 rectangle, 2 quadrilaterals, 1 pentagon`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(class, n)| format!("{n} {}", class.noun(*n)))
            .collect();
        f.write_str(&parts.join(", "))
    }
}
