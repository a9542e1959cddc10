//! Precomputed reduced model: per-cubature-point weight evaluations, the
//! constant `dF/dz` blocks, and the reduced mass matrix.
//!
//! Because the deformation map is linear in z, everything here is computed
//! once per (field, skinning, cubature) and reused across all timesteps and
//! parameter probes.

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;

use super::kinematics::{self, DOF_PER_HANDLE};
use super::SimError;
use crate::convex::ConvexField;
use crate::materials::MaterialParams;
use crate::skinning::{CubatureSet, SkinningField, WeightEval};

/// Reduced mass matrix `sum_i m_i J_i^T J_i`, symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct MassMatrix(pub DMatrix<f64>);

impl MassMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..self.0.nrows() {
            for c in (r + 1)..self.0.ncols() {
                worst = worst.max((self.0[(r, c)] - self.0[(c, r)]).abs());
            }
        }
        worst
    }
}

/// Assembles the reduced mass matrix from cubature masses and weights.
///
/// The position Jacobian has the block structure `J[(r),(m,r,c)] = W_m h_c`,
/// so `J^T J` is a 4M x 4M outer product replicated on the r-diagonal.
pub fn assemble_mass_matrix(cubature: &CubatureSet, skinning: &SkinningField) -> MassMatrix {
    let m_handles = skinning.num_handles();
    let evals: Vec<WeightEval> = cubature.points.iter().map(|x| skinning.eval(x)).collect();
    assemble_mass_matrix_with(cubature, &evals, m_handles)
}

pub(crate) fn assemble_mass_matrix_with(
    cubature: &CubatureSet,
    evals: &[WeightEval],
    m_handles: usize,
) -> MassMatrix {
    let dim4 = 4 * m_handles;
    let mut p4 = DMatrix::<f64>::zeros(dim4, dim4);
    for (i, x) in cubature.points.iter().enumerate() {
        let h = kinematics::homog(x);
        let w = &evals[i].weights;
        let mass = cubature.masses[i];
        let mut v = DVector::<f64>::zeros(dim4);
        for m in 0..m_handles {
            for c in 0..4 {
                v[m * 4 + c] = w[m] * h[c];
            }
        }
        for a in 0..dim4 {
            let va = mass * v[a];
            if va == 0.0 {
                continue;
            }
            for b in 0..dim4 {
                p4[(a, b)] += va * v[b];
            }
        }
    }
    let dim = DOF_PER_HANDLE * m_handles;
    let mut full = DMatrix::<f64>::zeros(dim, dim);
    for m in 0..m_handles {
        for c in 0..4 {
            for mp in 0..m_handles {
                for cp in 0..4 {
                    let val = p4[(m * 4 + c, mp * 4 + cp)];
                    for r in 0..3 {
                        full[(kinematics::dof_index(m, r, c), kinematics::dof_index(mp, r, cp))] =
                            val;
                    }
                }
            }
        }
    }
    MassMatrix(full)
}

/// Everything the timestepper needs, precomputed.
pub struct ReducedModel {
    pub rest_field: ConvexField,
    pub material: MaterialParams,
    pub cubature: CubatureSet,
    /// Weight evaluations at the cubature points.
    pub evals: Vec<WeightEval>,
    /// Constant `dvec(F)/dz`, stacked 9-row blocks per cubature point.
    pub df_dz: DMatrix<f64>,
    pub mass: MassMatrix,
    /// Weight evaluations at each primitive's rest hull points.
    pub hull_evals: Vec<Vec<WeightEval>>,
    num_handles: usize,
}

impl ReducedModel {
    pub fn new(
        rest_field: ConvexField,
        skinning: &SkinningField,
        material: MaterialParams,
        cubature: CubatureSet,
    ) -> Result<Self, SimError> {
        rest_field.validate()?;
        if cubature.is_empty() {
            return Err(SimError::Mismatch("empty cubature".into()));
        }
        let m_handles = skinning.num_handles();
        let n = cubature.len();
        let evals: Vec<WeightEval> = cubature
            .points
            .par_iter()
            .map(|x| skinning.eval(x))
            .collect();
        let mut df_dz = DMatrix::<f64>::zeros(9 * n, DOF_PER_HANDLE * m_handles);
        for (i, x) in cubature.points.iter().enumerate() {
            kinematics::write_df_dz(&mut df_dz, i, x, &evals[i]);
        }
        let mass = assemble_mass_matrix_with(&cubature, &evals, m_handles);
        let hull_evals: Vec<Vec<WeightEval>> = rest_field
            .rest_primitives
            .iter()
            .map(|p| p.points.iter().map(|x| skinning.eval(x)).collect())
            .collect();
        Ok(Self {
            rest_field,
            material,
            cubature,
            evals,
            df_dz,
            mass,
            hull_evals,
            num_handles: m_handles,
        })
    }

    pub fn num_handles(&self) -> usize {
        self.num_handles
    }

    pub fn dof(&self) -> usize {
        DOF_PER_HANDLE * self.num_handles
    }

    /// Same model with different elastic constants; all geometry caches are
    /// shared (the basis and cubature do not depend on E, nu).
    pub fn with_material(&self, material: MaterialParams) -> Self {
        Self {
            rest_field: self.rest_field.clone(),
            material,
            cubature: self.cubature.clone(),
            evals: self.evals.clone(),
            df_dz: self.df_dz.clone(),
            mass: self.mass.clone(),
            hull_evals: self.hull_evals.clone(),
            num_handles: self.num_handles,
        }
    }

    /// Deformed position of cubature point `i` under `z`.
    pub fn deformed_cubature_point(&self, i: usize, z: &DVector<f64>) -> Vector3<f64> {
        kinematics::deform_point_eval(&self.cubature.points[i], z, &self.evals[i])
    }

    /// Advects the rest field through the reduced map at `z`.
    pub fn advect_field(&self, z: &DVector<f64>) -> Result<ConvexField, SimError> {
        let mut primitives = Vec::with_capacity(self.rest_field.rest_primitives.len());
        for (p, evals) in self
            .rest_field
            .rest_primitives
            .iter()
            .zip(&self.hull_evals)
        {
            let mut k = 0;
            let advected = p.advect(|x| {
                let out = kinematics::deform_point_eval(x, z, &evals[k]);
                k += 1;
                out
            })?;
            primitives.push(advected);
        }
        Ok(ConvexField {
            primitives,
            rest_primitives: self.rest_field.rest_primitives.clone(),
        })
    }
}
