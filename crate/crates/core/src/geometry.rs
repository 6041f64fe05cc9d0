//! Planar polygons in double precision, line splitting and shape classes.
//!
//! Tolerances: `EPSILON` for side-of-line and collinearity tests, `SNAP` for
//! merging nearly coincident vertices. The working scale is the unit square.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EPSILON: f64 = 1e-9;
pub const SNAP: f64 = 1e-7;
pub const ANGLE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 distinct non-collinear vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has zero area")]
    ZeroArea,
    #[error("polygon edges intersect")]
    SelfIntersecting,
    #[error("line splitting requires a convex polygon")]
    NonConvex,
    #[error("cut line contains a polygon edge")]
    DegenerateCut,
    #[error("cut endpoints coincide")]
    ZeroLengthCut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Point) -> f64 {
        self.sub(o).norm()
    }
}

/// An infinite line through two distinct points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: Point,
    pub to: Point,
}

impl Line {
    pub fn new(from: Point, to: Point) -> Result<Self, GeometryError> {
        if from.distance(to) < SNAP {
            return Err(GeometryError::ZeroLengthCut);
        }
        Ok(Self { from, to })
    }

    /// Signed distance of `p` from the line; positive on the left of `from -> to`.
    pub fn side(&self, p: Point) -> f64 {
        let d = self.to.sub(self.from);
        d.cross(p.sub(self.from)) / d.norm()
    }
}

/// A simple polygon with counter-clockwise vertices and no redundant ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = GeometryError;
    fn try_from(v: Vec<Point>) -> Result<Self, Self::Error> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| v[i].cross(v[(i + 1) % n]))
        .sum::<f64>()
        / 2.0
}

/// Drops snapped duplicates and collinear vertices until stable.
fn normalize(mut v: Vec<Point>) -> Vec<Point> {
    loop {
        let n = v.len();
        if n < 3 {
            return v;
        }
        let mut removed = None;
        for i in 0..n {
            let prev = v[(i + n - 1) % n];
            let cur = v[i];
            let next = v[(i + 1) % n];
            if cur.distance(next) < SNAP || cur.sub(prev).cross(next.sub(cur)).abs() < EPSILON {
                removed = Some(i);
                break;
            }
        }
        match removed {
            Some(i) => {
                v.remove(i);
            }
            None => return v,
        }
    }
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = b.sub(a).cross(c.sub(a));
    let d2 = b.sub(a).cross(d.sub(a));
    let d3 = d.sub(c).cross(a.sub(c));
    let d4 = d.sub(c).cross(b.sub(c));
    let straddle = |p: f64, q: f64| (p > EPSILON && q < -EPSILON) || (p < -EPSILON && q > EPSILON);
    if straddle(d1, d2) && straddle(d3, d4) {
        return true;
    }
    // touching: an endpoint lies on the other segment
    let on = |p: Point, q: Point, r: Point| {
        q.sub(p).cross(r.sub(p)).abs() < EPSILON
            && r.x >= p.x.min(q.x) - EPSILON
            && r.x <= p.x.max(q.x) + EPSILON
            && r.y >= p.y.min(q.y) - EPSILON
            && r.y <= p.y.max(q.y) + EPSILON
    };
    on(a, b, c) || on(a, b, d) || on(c, d, a) || on(c, d, b)
}

impl Polygon {
    /// Normalizes the ring (snap, drop collinear vertices, orient CCW) and
    /// validates it.
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        let mut v = normalize(vertices);
        if v.len() < 3 {
            return Err(GeometryError::TooFewVertices(v.len()));
        }
        let n = v.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if !adjacent && segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                    return Err(GeometryError::SelfIntersecting);
                }
            }
        }
        let area = signed_area(&v);
        if area.abs() < EPSILON {
            return Err(GeometryError::ZeroArea);
        }
        if area < 0.0 {
            v.reverse();
        }
        Ok(Self { vertices: v })
    }

    pub fn unit_square() -> Self {
        Self {
            vertices: vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ],
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn is_convex(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        (0..n).all(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            let c = v[(i + 2) % n];
            b.sub(a).cross(c.sub(b)) > -EPSILON
        })
    }

    /// Even-odd point containment. Points on the boundary may go either way.
    pub fn contains(&self, p: Point) -> bool {
        let v = &self.vertices;
        let n = v.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// Splits a convex polygon by an infinite line.
    ///
    /// Returns the polygon unchanged when the line misses its interior, or
    /// the two pieces (left of the line first) otherwise. Crossing points are
    /// shared bit-for-bit by both pieces.
    pub fn split(&self, line: &Line) -> Result<Vec<Polygon>, GeometryError> {
        if !self.is_convex() {
            return Err(GeometryError::NonConvex);
        }
        let v = &self.vertices;
        let n = v.len();
        let sides: Vec<f64> = v
            .iter()
            .map(|&p| {
                let s = line.side(p);
                if s.abs() < EPSILON {
                    0.0
                } else {
                    s
                }
            })
            .collect();
        if (0..n).any(|i| sides[i] == 0.0 && sides[(i + 1) % n] == 0.0) {
            return Err(GeometryError::DegenerateCut);
        }
        let has_left = sides.iter().any(|&s| s > 0.0);
        let has_right = sides.iter().any(|&s| s < 0.0);
        if !(has_left && has_right) {
            return Ok(vec![self.clone()]);
        }

        let mut left = Vec::with_capacity(n + 2);
        let mut right = Vec::with_capacity(n + 2);
        for i in 0..n {
            let j = (i + 1) % n;
            let (a, sa) = (v[i], sides[i]);
            let (b, sb) = (v[j], sides[j]);
            if sa >= 0.0 {
                left.push(a);
            }
            if sa <= 0.0 {
                right.push(a);
            }
            if (sa > 0.0 && sb < 0.0) || (sa < 0.0 && sb > 0.0) {
                let t = sa / (sa - sb);
                let mut x = Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
                if x.distance(a) < SNAP {
                    x = a;
                } else if x.distance(b) < SNAP {
                    x = b;
                }
                left.push(x);
                right.push(x);
            }
        }
        match (Polygon::new(left), Polygon::new(right)) {
            (Ok(l), Ok(r)) => Ok(vec![l, r]),
            // one side collapsed to a sliver below tolerance: the line only grazes
            _ => Ok(vec![self.clone()]),
        }
    }

    pub fn classify(&self) -> ShapeClass {
        let v = &self.vertices;
        match v.len() {
            3 => ShapeClass::Triangle,
            4 => {
                let right_angled = (0..4).all(|i| {
                    let prev = v[(i + 3) % 4].sub(v[i]);
                    let next = v[(i + 1) % 4].sub(v[i]);
                    let angle = prev.cross(next).abs().atan2(prev.dot(next));
                    (angle - FRAC_PI_2).abs() <= ANGLE_TOLERANCE
                });
                if right_angled {
                    ShapeClass::Rectangle
                } else {
                    ShapeClass::Quadrilateral
                }
            }
            5 => ShapeClass::Pentagon,
            n => ShapeClass::Other(n),
        }
    }
}

/// Free-function form of [`Polygon::split`].
pub fn split_polygon(poly: &Polygon, line: &Line) -> Result<Vec<Polygon>, GeometryError> {
    poly.split(line)
}

/// Free-function form of [`Polygon::classify`].
pub fn classify_region(poly: &Polygon) -> ShapeClass {
    poly.classify()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeClass {
    Triangle,
    Rectangle,
    Quadrilateral,
    Pentagon,
    Other(usize),
}

impl ShapeClass {
    pub fn noun(&self, count: usize) -> String {
        let base = match self {
            ShapeClass::Triangle => "triangle".to_string(),
            ShapeClass::Rectangle => "rectangle".to_string(),
            ShapeClass::Quadrilateral => "quadrilateral".to_string(),
            ShapeClass::Pentagon => "pentagon".to_string(),
            ShapeClass::Other(n) => format!("{n}-gon"),
        };
        if count == 1 {
            base
        } else {
            format!("{base}s")
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.noun(1))
    }
}
