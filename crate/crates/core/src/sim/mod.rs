//! Reduced-order implicit-Euler dynamics over the convex field.

pub mod kinematics;
mod model;
mod newton;
mod potential;
mod simulate;

pub use kinematics::{deform_point, deformation_gradient, dof_index, DOF_PER_HANDLE};
pub use model::{assemble_mass_matrix, MassMatrix, ReducedModel};
pub use newton::{solve_timestep, NewtonSettings, SolveStats};
pub use potential::{
    contact_energy_at, elastic_energy_at, gravity_energy, kinetic_energy, EnergyParts,
    IncrementalPotential,
};
pub use simulate::{simulate, simulate_from, SimFrame, Trajectory};

use nalgebra::{DVector, Vector3};
use thiserror::Error;

use crate::convex::ConvexError;
use crate::materials::MaterialError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("solver diverged: line search failed after {halvings} halvings at iteration {iteration}")]
    SolverDiverged { iteration: usize, halvings: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Convex(#[from] ConvexError),
    #[error("at frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error("model mismatch: {0}")]
    Mismatch(String),
}

/// Reduced degrees of freedom and velocity; length is always `12 * M`.
///
/// Freshly constructed states are zero so the map starts as the identity.
#[derive(Debug, Clone)]
pub struct ReducedState {
    pub z: DVector<f64>,
    pub z_dot: DVector<f64>,
    pub time: f64,
    pub dt: f64,
}

impl ReducedState {
    pub fn new(num_handles: usize, dt: f64) -> Self {
        Self {
            z: DVector::zeros(DOF_PER_HANDLE * num_handles),
            z_dot: DVector::zeros(DOF_PER_HANDLE * num_handles),
            time: 0.0,
            dt,
        }
    }

    pub fn num_handles(&self) -> usize {
        self.z.len() / DOF_PER_HANDLE
    }

    /// First-order predictor `z + dt * z_dot`.
    pub fn predictor(&self) -> DVector<f64> {
        &self.z + self.dt * &self.z_dot
    }

    pub fn is_finite(&self) -> bool {
        self.z.iter().all(|v| v.is_finite()) && self.z_dot.iter().all(|v| v.is_finite())
    }
}

/// A penalty floor plane. `height` is the offset along `normal` at t = 0; the
/// plane advances with `velocity` (only the normal component changes contact).
#[derive(Debug, Clone, Copy)]
pub struct Floor {
    pub height: f64,
    pub normal: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl Floor {
    /// Plane offset along the normal at time `t`.
    pub fn offset_at(&self, t: f64) -> f64 {
        self.height + self.normal.dot(&self.velocity) * t
    }
}

/// Body-force window: acceleration applied while `t_start <= t < t_end`.
#[derive(Debug, Clone, Copy)]
pub struct ExternalForce {
    /// Force density in N/kg (an acceleration).
    pub accel: Vector3<f64>,
    pub t_start: f64,
    pub t_end: f64,
}

impl ExternalForce {
    pub fn active_at(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end
    }
}

/// External world acting on the object.
#[derive(Debug, Clone, Copy)]
pub struct SceneConditions {
    pub gravity: Vector3<f64>,
    pub floor: Option<Floor>,
    pub external_force: Option<ExternalForce>,
    /// Contact penalty stiffness (1/s^2; the penalty is mass-weighted).
    pub penalty_stiffness: f64,
}

impl Default for SceneConditions {
    fn default() -> Self {
        Self {
            gravity: Vector3::zeros(),
            floor: None,
            external_force: None,
            penalty_stiffness: 1e5,
        }
    }
}

impl SceneConditions {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.floor.is_some() && self.penalty_stiffness <= 0.0 {
            return Err(SimError::Mismatch(format!(
                "penalty_stiffness {} must be positive when a floor is present",
                self.penalty_stiffness
            )));
        }
        if let Some(f) = &self.floor {
            if (f.normal.norm() - 1.0).abs() > 1e-9 {
                return Err(SimError::Mismatch("floor normal must be unit length".into()));
            }
        }
        Ok(())
    }
}
