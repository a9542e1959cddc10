//! Projected-Newton minimization of the incremental potential with Armijo
//! backtracking, one call per timestep.

use nalgebra::{Cholesky, DVector};

use super::model::ReducedModel;
use super::potential::IncrementalPotential;
use super::{ReducedState, SceneConditions, SimError};
use crate::materials::MaterialError;

#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    /// Converged when `||grad||_inf < tol_rel * (1 + ||grad_0||_inf)`.
    pub grad_tol_rel: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub armijo_c: f64,
    pub backtrack: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            grad_tol_rel: 1e-6,
            max_iterations: 50,
            max_halvings: 40,
            armijo_c: 1e-4,
            backtrack: 0.5,
        }
    }
}

/// Per-solve diagnostics.
#[derive(Debug, Clone)]
pub struct SolveStats {
    /// Number of Newton steps actually taken.
    pub iterations: usize,
    /// Potential value after each accepted step (starting value first).
    pub ip_values: Vec<f64>,
    pub converged: bool,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

/// Advances the state by one implicit-Euler step.
pub fn solve_timestep(
    model: &ReducedModel,
    state: &ReducedState,
    conditions: &SceneConditions,
    settings: &NewtonSettings,
) -> Result<(ReducedState, SolveStats), SimError> {
    let ip = IncrementalPotential::new(model, conditions, state)?;

    // Start from the predictor; fall back to the current state when the
    // predictor already inverts an element.
    let mut z = ip.z_tilde.clone();
    let mut f_cur = match ip.value(&z) {
        Ok(v) => v,
        Err(SimError::Material(MaterialError::ElementInversion { .. })) => {
            z = state.z.clone();
            ip.value(&z)?
        }
        Err(e) => return Err(e),
    };

    let g0 = ip.gradient(&z)?;
    let tol = settings.grad_tol_rel * (1.0 + inf_norm(&g0));
    let mut stats = SolveStats {
        iterations: 0,
        ip_values: vec![f_cur],
        converged: false,
    };

    let mut grad = g0;
    for it in 0..settings.max_iterations {
        if inf_norm(&grad) < tol {
            stats.converged = true;
            break;
        }
        let hess = ip.hessian(&z)?;
        // Cholesky with escalating diagonal shift for the semidefinite case.
        let dim = hess.nrows();
        let mut shift = 0.0;
        let base = (hess.trace().abs() / dim as f64).max(1e-30);
        let direction = loop {
            let mut h = hess.clone();
            if shift > 0.0 {
                for i in 0..dim {
                    h[(i, i)] += shift;
                }
            }
            if let Some(chol) = Cholesky::new(h) {
                break chol.solve(&(-&grad));
            }
            shift = if shift == 0.0 { 1e-12 * base } else { shift * 10.0 };
            if shift > 1e12 * base {
                return Err(SimError::SolverDiverged {
                    iteration: it,
                    halvings: 0,
                });
            }
        };

        let slope = grad.dot(&direction);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..settings.max_halvings {
            let z_try = &z + alpha * &direction;
            match ip.value(&z_try) {
                Ok(f_try) if f_try <= f_cur + settings.armijo_c * alpha * slope => {
                    accepted = Some((z_try, f_try));
                    break;
                }
                // Inversion or insufficient decrease: shrink the step.
                Ok(_) | Err(SimError::Material(MaterialError::ElementInversion { .. })) => {
                    alpha *= settings.backtrack;
                }
                Err(e) => return Err(e),
            }
        }
        let Some((z_new, f_new)) = accepted else {
            return Err(SimError::SolverDiverged {
                iteration: it,
                halvings: settings.max_halvings,
            });
        };
        z = z_new;
        f_cur = f_new;
        stats.iterations = it + 1;
        stats.ip_values.push(f_cur);
        grad = ip.gradient(&z)?;
    }
    if !stats.converged && inf_norm(&grad) < tol {
        stats.converged = true;
    }

    if z.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFinite {
            context: "solution z after Newton solve".into(),
        });
    }

    let z_dot = (&z - &state.z) / state.dt;
    Ok((
        ReducedState {
            z,
            z_dot,
            time: state.time + state.dt,
            dt: state.dt,
        },
        stats,
    ))
}
