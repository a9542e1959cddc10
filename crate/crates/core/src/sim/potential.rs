//! The per-timestep objective of implicit Euler:
//! `IP(z) = 1/2 ||z - z_tilde||_M^2 + dt^2 (E_elastic + E_gravity + E_contact + E_ext)`.
//!
//! All energies are evaluated at the end-of-step time (forces and the moving
//! floor are implicit). The elastic term can fail with element inversion; the
//! Newton line search treats that as an infinite trial value.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;

use super::kinematics;
use super::model::ReducedModel;
use super::{ReducedState, SceneConditions, SimError};
use crate::materials::{self, MaterialError};
use crate::parallel::chunked_sum;

/// Energy terms of the potential (unscaled by dt^2), for audits and tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyParts {
    pub elastic: f64,
    pub gravity: f64,
    pub contact: f64,
    pub external: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.elastic + self.gravity + self.contact + self.external
    }
}

pub struct IncrementalPotential<'a> {
    pub model: &'a ReducedModel,
    pub dt: f64,
    pub z_tilde: DVector<f64>,
    /// Gravity force vector `sum_i m_i J_i^T g` and its constant potential.
    gravity_vec: DVector<f64>,
    gravity_const: f64,
    /// Same for the external force while its window is active.
    external_vec: DVector<f64>,
    external_const: f64,
    contact: Option<ContactCache>,
}

struct ContactCache {
    stiffness: f64,
    /// Row i is `J_i^T n`, so normal coordinates are `base + u * z`.
    u: DMatrix<f64>,
    /// `n . X_i - floor_offset` per point.
    base: DVector<f64>,
}

impl<'a> IncrementalPotential<'a> {
    /// Builds the potential for one step starting at `state`.
    pub fn new(
        model: &'a ReducedModel,
        conditions: &SceneConditions,
        state: &ReducedState,
    ) -> Result<Self, SimError> {
        conditions.validate()?;
        let dt = state.dt;
        let t_end = state.time + dt;
        let dof = model.dof();

        let mut gravity_vec = DVector::zeros(dof);
        let mut gravity_const = 0.0;
        let mut external_vec = DVector::zeros(dof);
        let mut external_const = 0.0;
        let ext_accel = conditions
            .external_force
            .filter(|f| f.active_at(t_end))
            .map(|f| f.accel);
        for (i, x) in model.cubature.points.iter().enumerate() {
            let m = model.cubature.masses[i];
            kinematics::accumulate_jt_vec(&mut gravity_vec, x, &model.evals[i], &conditions.gravity, m);
            gravity_const -= m * conditions.gravity.dot(x);
            if let Some(a) = &ext_accel {
                kinematics::accumulate_jt_vec(&mut external_vec, x, &model.evals[i], a, m);
                external_const -= m * a.dot(x);
            }
        }

        let contact = conditions.floor.map(|floor| {
            let n = model.cubature.len();
            let offset = floor.offset_at(t_end);
            let mut u = DMatrix::zeros(n, dof);
            let mut base = DVector::zeros(n);
            for (i, x) in model.cubature.points.iter().enumerate() {
                let mut row = DVector::zeros(dof);
                kinematics::accumulate_jt_vec(&mut row, x, &model.evals[i], &floor.normal, 1.0);
                u.row_mut(i).copy_from(&row.transpose());
                base[i] = floor.normal.dot(x) - offset;
            }
            ContactCache {
                stiffness: conditions.penalty_stiffness,
                u,
                base,
            }
        });

        Ok(Self {
            model,
            dt,
            z_tilde: state.predictor(),
            gravity_vec,
            gravity_const,
            external_vec,
            external_const,
            contact,
        })
    }

    /// Deformation gradients at all cubature points: `vec(F_i) = I + (G z)_i`.
    fn gradients_at(&self, z: &DVector<f64>) -> Vec<Matrix3<f64>> {
        let gz = &self.model.df_dz * z;
        let n = self.model.cubature.len();
        (0..n)
            .map(|i| {
                let b = 9 * i;
                let mut f = Matrix3::from_column_slice(gz.as_slice()[b..b + 9].try_into().unwrap());
                f[(0, 0)] += 1.0;
                f[(1, 1)] += 1.0;
                f[(2, 2)] += 1.0;
                f
            })
            .collect()
    }

    /// Elastic energy `sum_i w_i Psi(F_i)`; errs on element inversion.
    pub fn elastic_energy(&self, z: &DVector<f64>) -> Result<f64, MaterialError> {
        let fs = self.gradients_at(z);
        let w = &self.model.cubature.weights;
        let mat = &self.model.material;
        let parts = chunked_sum(
            fs.len(),
            |range| {
                let mut acc = Ok(0.0);
                for i in range {
                    match materials::neo_hookean_energy(&fs[i], mat) {
                        Ok(psi) => {
                            if let Ok(a) = acc.as_mut() {
                                *a += w[i] * psi;
                            }
                        }
                        Err(e) => {
                            acc = Err(e);
                            break;
                        }
                    }
                }
                acc
            },
            Ok(0.0),
            |a, b| match (a, b) {
                (Ok(x), Ok(y)) => Ok(x + y),
                (Err(e), _) | (_, Err(e)) => Err(e),
            },
        );
        parts
    }

    /// Gravity + external-force potential `-sum_i m_i a . x_i(z)`.
    pub fn force_energy(&self, z: &DVector<f64>) -> f64 {
        self.gravity_const + self.external_const - (&self.gravity_vec + &self.external_vec).dot(z)
    }

    /// One-sided quadratic floor penalty `k/2 sum_i m_i min(d_i, 0)^2`.
    pub fn contact_energy(&self, z: &DVector<f64>) -> f64 {
        let Some(c) = &self.contact else { return 0.0 };
        let d = &c.base + &c.u * z;
        let masses = &self.model.cubature.masses;
        0.5 * c.stiffness
            * chunked_sum(
                d.len(),
                |range| {
                    let mut acc = 0.0;
                    for i in range {
                        if d[i] < 0.0 {
                            acc += masses[i] * d[i] * d[i];
                        }
                    }
                    acc
                },
                0.0,
                |a, b| a + b,
            )
    }

    /// Full incremental potential value.
    pub fn value(&self, z: &DVector<f64>) -> Result<f64, SimError> {
        let dz = z - &self.z_tilde;
        let inertia = 0.5 * dz.dot(&(&self.model.mass.0 * &dz));
        let elastic = self.elastic_energy(z)?;
        let pot = elastic + self.force_energy(z) + self.contact_energy(z);
        Ok(inertia + self.dt * self.dt * pot)
    }

    /// Potential energy split at `z` (unscaled), for audits.
    pub fn energy_parts(&self, z: &DVector<f64>) -> Result<EnergyParts, SimError> {
        Ok(EnergyParts {
            elastic: self.elastic_energy(z)?,
            gravity: self.gravity_const - self.gravity_vec.dot(z),
            contact: self.contact_energy(z),
            external: self.external_const - self.external_vec.dot(z),
        })
    }

    /// Analytic gradient of the potential.
    pub fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>, SimError> {
        let dz = z - &self.z_tilde;
        let mut grad = &self.model.mass.0 * dz;

        // Elastic: G^T (w_i vec(P_i)).
        let fs = self.gradients_at(z);
        let mat = &self.model.material;
        let w = &self.model.cubature.weights;
        let stresses: Vec<Result<Matrix3<f64>, MaterialError>> = fs
            .par_iter()
            .map(|f| materials::first_piola_stress(f, mat))
            .collect();
        let mut p_all = DVector::zeros(9 * fs.len());
        for (i, p) in stresses.into_iter().enumerate() {
            let p = p?;
            let b = 9 * i;
            for j in 0..3 {
                for r in 0..3 {
                    p_all[b + r + 3 * j] = w[i] * p[(r, j)];
                }
            }
        }
        let elastic_grad = self.model.df_dz.transpose() * p_all;

        let dt2 = self.dt * self.dt;
        grad += dt2 * (elastic_grad - &self.gravity_vec - &self.external_vec);

        if let Some(c) = &self.contact {
            let d = &c.base + &c.u * z;
            let masses = &self.model.cubature.masses;
            let mut coeff = DVector::zeros(d.len());
            for i in 0..d.len() {
                if d[i] < 0.0 {
                    coeff[i] = c.stiffness * masses[i] * d[i];
                }
            }
            grad += dt2 * (c.u.transpose() * coeff);
        }
        Ok(grad)
    }

    /// Gauss-Newton Hessian: exact mass and penalty terms plus the elastic
    /// term with each per-sample 9x9 `d2Psi/dF2` projected to PSD.
    pub fn hessian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>, SimError> {
        let dof = self.model.dof();
        let n = self.model.cubature.len();
        let fs = self.gradients_at(z);
        let mat = &self.model.material;
        let w = &self.model.cubature.weights;

        // Per-point factor rows: S_i = sqrt(w_i) * sqrt_psd(H_i) * G_i.
        // nalgebra is column-major so row blocks are not contiguous; fill via
        // a parallel map into local blocks then copy in order.
        let mut s_all = DMatrix::<f64>::zeros(9 * n, dof);
        let blocks: Vec<Result<DMatrix<f64>, MaterialError>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let h = materials::stress_derivative(&fs[i], mat)?;
                let s = materials::psd_factor(&h);
                let gi = self.model.df_dz.rows(9 * i, 9);
                let mut block = DMatrix::zeros(9, dof);
                let scale = w[i].sqrt();
                for r in 0..9 {
                    for c in 0..dof {
                        let mut acc = 0.0;
                        for k in 0..9 {
                            acc += s[(r, k)] * gi[(k, c)];
                        }
                        block[(r, c)] = scale * acc;
                    }
                }
                Ok(block)
            })
            .collect();
        for (i, b) in blocks.into_iter().enumerate() {
            let b = b?;
            s_all.rows_mut(9 * i, 9).copy_from(&b);
        }

        let dt2 = self.dt * self.dt;
        let mut hess = &self.model.mass.0 + dt2 * (s_all.transpose() * &s_all);

        if let Some(c) = &self.contact {
            let d = &c.base + &c.u * z;
            let masses = &self.model.cubature.masses;
            for i in 0..d.len() {
                if d[i] < 0.0 {
                    let k = dt2 * c.stiffness * masses[i];
                    let row = c.u.row(i);
                    for a in 0..dof {
                        let ka = k * row[a];
                        if ka == 0.0 {
                            continue;
                        }
                        for b in 0..dof {
                            hess[(a, b)] += ka * row[b];
                        }
                    }
                }
            }
        }
        Ok(hess)
    }
}

/// Kinetic energy `1/2 z_dot^T M z_dot` of the reduced state.
pub fn kinetic_energy(model: &ReducedModel, z_dot: &DVector<f64>) -> f64 {
    0.5 * z_dot.dot(&(&model.mass.0 * z_dot))
}

/// Gravity potential `-sum_i m_i g . x_i(z)` (absolute, for audits).
pub fn gravity_energy(model: &ReducedModel, z: &DVector<f64>, gravity: &Vector3<f64>) -> f64 {
    let mut e = 0.0;
    for i in 0..model.cubature.len() {
        let x = model.deformed_cubature_point(i, z);
        e -= model.cubature.masses[i] * gravity.dot(&x);
    }
    e
}

/// Floor penalty energy at absolute time `t` (for audits).
pub fn contact_energy_at(
    model: &ReducedModel,
    z: &DVector<f64>,
    conditions: &SceneConditions,
    t: f64,
) -> f64 {
    let Some(floor) = &conditions.floor else { return 0.0 };
    let offset = floor.offset_at(t);
    let mut e = 0.0;
    for i in 0..model.cubature.len() {
        let x = model.deformed_cubature_point(i, z);
        let d = floor.normal.dot(&x) - offset;
        if d < 0.0 {
            e += 0.5 * conditions.penalty_stiffness * model.cubature.masses[i] * d * d;
        }
    }
    e
}

/// Elastic energy of the model at `z` (for audits).
pub fn elastic_energy_at(model: &ReducedModel, z: &DVector<f64>) -> Result<f64, MaterialError> {
    let gz = &model.df_dz * z;
    let mut acc = 0.0;
    for i in 0..model.cubature.len() {
        let b = 9 * i;
        let mut f = Matrix3::from_column_slice(gz.as_slice()[b..b + 9].try_into().unwrap());
        f[(0, 0)] += 1.0;
        f[(1, 1)] += 1.0;
        f[(2, 2)] += 1.0;
        acc += model.cubature.weights[i] * materials::neo_hookean_energy(&f, &model.material)?;
    }
    Ok(acc)
}
