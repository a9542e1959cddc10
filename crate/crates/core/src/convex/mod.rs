//! Convex primitive geometry: point-set hulls, half-space extraction, and the
//! smooth occupancy field used by both the volume sampler and the renderer.

mod hull;

pub use hull::{compute_hull, hull_2d, FACE_MERGE_ANGLE, HULL_EPS_PER_DIAG};

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConvexError {
    #[error("degenerate hull: {points} points with rank < 3")]
    DegenerateHull { points: usize },
    #[error("primitive needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid primitive attribute: {0}")]
    InvalidAttribute(String),
    #[error("field has mismatched primitive lists: {current} vs {rest} rest primitives")]
    FieldMismatch { current: usize, rest: usize },
}

/// One oriented face plane `n.x + d = 0` with outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

/// Half-space representation of a convex hull: the intersection of planes.
#[derive(Debug, Clone)]
pub struct HalfSpaceSet {
    pub planes: Vec<Plane>,
}

impl HalfSpaceSet {
    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }
}

/// Signed distance of `x` to a plane: positive outside, negative inside.
pub fn plane_distance(plane: &Plane, x: &Vector3<f64>) -> f64 {
    plane.normal.dot(x) + plane.offset
}

/// Smooth signed distance `phi(x) = log sum_h exp(alpha * f_h(x))`.
///
/// Computed with max-subtraction so large `alpha * f` never overflows.
pub fn smooth_sdf(halfspaces: &HalfSpaceSet, x: &Vector3<f64>, alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0);
    debug_assert!(!halfspaces.is_empty());
    let mut max = f64::NEG_INFINITY;
    for p in &halfspaces.planes {
        max = max.max(alpha * plane_distance(p, x));
    }
    let mut sum = 0.0;
    for p in &halfspaces.planes {
        sum += (alpha * plane_distance(p, x) - max).exp();
    }
    max + sum.ln()
}

/// Logistic sigmoid, evaluated in the numerically stable branch.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Clamps a sigmoid output into the open interval (0, 1).
///
/// The exact value is always in (0, 1); f64 saturates for |arg| > ~745, so the
/// clamp only replaces hard 0/1 with the nearest representable neighbors.
pub fn open_unit(v: f64) -> f64 {
    v.max(f64::MIN_POSITIVE).min(1.0 - f64::EPSILON / 2.0)
}

/// A smooth convex body: the hull of `points` with rendering attributes.
///
/// `smoothness` (alpha) softens vertices/edges of the log-sum-exp distance and
/// `sharpness` (beta) controls how fast occupancy falls off across the boundary.
#[derive(Debug, Clone)]
pub struct ConvexPrimitive {
    pub points: Vec<Vector3<f64>>,
    pub color: [f64; 3],
    pub opacity: f64,
    pub smoothness: f64,
    pub sharpness: f64,
    halfspaces: HalfSpaceSet,
}

impl ConvexPrimitive {
    pub fn new(
        points: Vec<Vector3<f64>>,
        color: [f64; 3],
        opacity: f64,
        smoothness: f64,
        sharpness: f64,
    ) -> Result<Self, ConvexError> {
        if points.len() < 4 {
            return Err(ConvexError::TooFewPoints(points.len()));
        }
        if !(0.0..=1.0).contains(&opacity) {
            return Err(ConvexError::InvalidAttribute(format!(
                "opacity {opacity} outside [0,1]"
            )));
        }
        if smoothness <= 0.0 || sharpness <= 0.0 {
            return Err(ConvexError::InvalidAttribute(format!(
                "smoothness {smoothness} / sharpness {sharpness} must be positive"
            )));
        }
        if color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(ConvexError::InvalidAttribute(format!(
                "color {color:?} outside [0,1]^3"
            )));
        }
        let halfspaces = HalfSpaceSet {
            planes: compute_hull(&points)?,
        };
        Ok(Self {
            points,
            color,
            opacity,
            smoothness,
            sharpness,
            halfspaces,
        })
    }

    pub fn halfspaces(&self) -> &HalfSpaceSet {
        &self.halfspaces
    }

    /// Smooth inside-indicator `O(x) = sigmoid(-beta * phi(x))`, in (0, 1).
    pub fn occupancy(&self, x: &Vector3<f64>) -> f64 {
        let phi = smooth_sdf(&self.halfspaces, x, self.smoothness);
        open_unit(sigmoid(-self.sharpness * phi))
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64
    }

    /// Maps every hull point through `deform` and rebuilds the half-spaces.
    ///
    /// Surface dynamics follow from vertex dynamics: the time-varying planes
    /// are always recomputed from the deformed point set. Color, opacity,
    /// smoothness and sharpness are time-invariant and copied unchanged.
    pub fn advect<F>(&self, mut deform: F) -> Result<Self, ConvexError>
    where
        F: FnMut(&Vector3<f64>) -> Vector3<f64>,
    {
        let points: Vec<Vector3<f64>> = self.points.iter().map(|p| deform(p)).collect();
        let halfspaces = HalfSpaceSet {
            planes: compute_hull(&points)?,
        };
        Ok(Self {
            points,
            color: self.color,
            opacity: self.opacity,
            smoothness: self.smoothness,
            sharpness: self.sharpness,
            halfspaces,
        })
    }
}

/// A collection of convex primitives plus its undeformed (material-space) copy.
#[derive(Debug, Clone)]
pub struct ConvexField {
    pub primitives: Vec<ConvexPrimitive>,
    pub rest_primitives: Vec<ConvexPrimitive>,
}

impl ConvexField {
    /// Builds a field at rest: the current state starts as a copy of rest.
    pub fn from_rest(rest: Vec<ConvexPrimitive>) -> Self {
        Self {
            primitives: rest.clone(),
            rest_primitives: rest,
        }
    }

    pub fn validate(&self) -> Result<(), ConvexError> {
        if self.primitives.len() != self.rest_primitives.len() {
            return Err(ConvexError::FieldMismatch {
                current: self.primitives.len(),
                rest: self.rest_primitives.len(),
            });
        }
        for (c, r) in self.primitives.iter().zip(&self.rest_primitives) {
            if c.points.len() != r.points.len() {
                return Err(ConvexError::FieldMismatch {
                    current: c.points.len(),
                    rest: r.points.len(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Axis-aligned bounding box over the rest primitives.
    pub fn rest_bbox(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let mut iter = self.rest_primitives.iter().flat_map(|p| p.points.iter());
        let first = *iter.next()?;
        let (mut lo, mut hi) = (first, first);
        for p in iter {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Some((lo, hi))
    }

    /// Occupancy of the union at `x`: max over rest primitives.
    pub fn rest_occupancy(&self, x: &Vector3<f64>) -> f64 {
        self.rest_primitives
            .iter()
            .map(|p| p.occupancy(x))
            .fold(0.0, f64::max)
    }

    /// Advects every primitive from its rest state through `deform`.
    pub fn advect_all<F>(&self, mut deform: F) -> Result<Self, ConvexError>
    where
        F: FnMut(&Vector3<f64>) -> Vector3<f64>,
    {
        let primitives = self
            .rest_primitives
            .iter()
            .map(|p| p.advect(&mut deform))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            primitives,
            rest_primitives: self.rest_primitives.clone(),
        })
    }
}
