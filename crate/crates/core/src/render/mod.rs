//! Convex splatting: project hull points, build 2D hulls, blend per-pixel
//! occupancies front to back.

mod backward;
pub mod ppm;
mod project;
mod raster;

pub use backward::{render_gradients, render_with_adjoint, FieldGradients};
pub use project::{project_primitive, ProjectedPrimitive};
pub use raster::{occupancy_2d, render, EdgePlane, Projected2d};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("all {points} hull points behind the near plane")]
    BehindCamera { points: usize },
    #[error("degenerate projection: {hull_size} hull vertices")]
    DegenerateProjection { hull_size: usize },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("image shape mismatch: {a_w}x{a_h} vs {b_w}x{b_h}")]
    ShapeMismatch {
        a_w: usize,
        a_h: usize,
        b_w: usize,
        b_h: usize,
    },
}

/// Pinhole camera. `rotation` maps world to camera coordinates
/// (rows: right, down, forward); pixel `u = width/2 + focal * x/z`.
#[derive(Debug, Clone)]
pub struct Camera {
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
}

impl Camera {
    pub fn new(
        position: Vector3<f64>,
        rotation: Matrix3<f64>,
        focal: f64,
        width: usize,
        height: usize,
        near: f64,
    ) -> Result<Self, RenderError> {
        if focal <= 0.0 || near <= 0.0 {
            return Err(RenderError::InvalidCamera(format!(
                "focal {focal} and near {near} must be positive"
            )));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if ortho > 1e-9 {
            return Err(RenderError::InvalidCamera(format!(
                "rotation not orthonormal (residual {ortho:.2e})"
            )));
        }
        Ok(Self {
            position,
            rotation,
            focal,
            width,
            height,
            near,
        })
    }

    /// Camera looking from `position` toward `target` with the given up hint.
    pub fn look_at(
        position: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: usize,
        height: usize,
        near: f64,
    ) -> Result<Self, RenderError> {
        let forward = (target - position)
            .try_normalize(1e-12)
            .ok_or_else(|| RenderError::InvalidCamera("target equals position".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| RenderError::InvalidCamera("up parallel to view direction".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Self::new(position, rotation, focal, width, height, near)
    }

    pub fn to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (x - self.position)
    }
}

/// RGB float image in [0,1] with its composited background color.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
    pub background: [f64; 3],
}

impl Image {
    pub fn solid(width: usize, height: usize, background: [f64; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![background; width * height],
            background,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize) -> &mut [f64; 3] {
        &mut self.pixels[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> Result<(), RenderError> {
        if self.width != other.width || self.height != other.height {
            return Err(RenderError::ShapeMismatch {
                a_w: self.width,
                a_h: self.height,
                b_w: other.width,
                b_h: other.height,
            });
        }
        Ok(())
    }

    pub fn channels_in_unit_range(&self) -> bool {
        self.pixels
            .iter()
            .all(|p| p.iter().all(|&c| (0.0..=1.0).contains(&c)))
    }
}
