//! Time integration loop: step the reduced state, advect the convex field.

use super::model::ReducedModel;
use super::newton::{solve_timestep, NewtonSettings};
use super::{ReducedState, SceneConditions, SimError};
use crate::convex::ConvexField;

/// One output frame: the reduced state and the advected field at that time.
#[derive(Debug, Clone)]
pub struct SimFrame {
    pub state: ReducedState,
    pub field: ConvexField,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub frames: Vec<SimFrame>,
    pub dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Runs `steps` implicit-Euler steps from rest (z = 0). The returned
/// trajectory has `steps + 1` frames, the first being the initial state.
pub fn simulate(
    model: &ReducedModel,
    conditions: &SceneConditions,
    steps: usize,
    dt: f64,
) -> Result<Trajectory, SimError> {
    simulate_from(model, ReducedState::new(model.num_handles(), dt), conditions, steps)
}

/// Same as [`simulate`] but starting from an explicit initial state.
pub fn simulate_from(
    model: &ReducedModel,
    initial: ReducedState,
    conditions: &SceneConditions,
    steps: usize,
) -> Result<Trajectory, SimError> {
    let settings = NewtonSettings::default();
    let dt = initial.dt;
    let mut frames = Vec::with_capacity(steps + 1);
    let field0 = model
        .advect_field(&initial.z)
        .map_err(|e| SimError::AtFrame {
            frame: 0,
            source: Box::new(e),
        })?;
    frames.push(SimFrame {
        state: initial,
        field: field0,
    });
    for k in 0..steps {
        let frame_idx = k + 1;
        let wrap = |e: SimError| SimError::AtFrame {
            frame: frame_idx,
            source: Box::new(e),
        };
        let (state, _stats) =
            solve_timestep(model, &frames[k].state, conditions, &settings).map_err(wrap)?;
        let field = model.advect_field(&state.z).map_err(wrap)?;
        frames.push(SimFrame { state, field });
    }
    Ok(Trajectory { frames, dt })
}
