//! Constitutive model: elastic parameters and the compressible Neo-Hookean
//! energy density with its analytic first and second derivatives.
//!
//! The energy is the classical log form
//! `Psi(F) = mu/2 (tr(F^T F) - 3) - mu ln J + lambda/2 (ln J)^2`, which has a
//! clean Piola stress and acts as a barrier against element inversion.

use nalgebra::{Matrix3, SMatrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("element inversion: det(F) = {det} <= 0")]
    ElementInversion { det: f64 },
}

/// Elastic parameters with derived Lame coefficients (Pa).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub youngs_modulus: f64,
    pub poissons_ratio: f64,
    pub density: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl MaterialParams {
    pub fn new(youngs_modulus: f64, poissons_ratio: f64, density: f64) -> Result<Self, MaterialError> {
        if youngs_modulus <= 0.0 {
            return Err(MaterialError::InvalidMaterial(format!(
                "E = {youngs_modulus} must be positive"
            )));
        }
        if density <= 0.0 {
            return Err(MaterialError::InvalidMaterial(format!(
                "density = {density} must be positive"
            )));
        }
        let (mu, lambda) = lame_from_elastic(youngs_modulus, poissons_ratio)?;
        Ok(Self {
            youngs_modulus,
            poissons_ratio,
            density,
            mu,
            lambda,
        })
    }

    /// Same material with different elastic constants (density preserved).
    pub fn with_elastic(&self, youngs_modulus: f64, poissons_ratio: f64) -> Result<Self, MaterialError> {
        Self::new(youngs_modulus, poissons_ratio, self.density)
    }
}

/// Lame coefficients from Young's modulus and Poisson's ratio.
pub fn lame_from_elastic(e: f64, nu: f64) -> Result<(f64, f64), MaterialError> {
    if e <= 0.0 {
        return Err(MaterialError::InvalidMaterial(format!("E = {e} must be positive")));
    }
    if !(-1.0 < nu && nu < 0.5) {
        return Err(MaterialError::InvalidMaterial(format!(
            "nu = {nu} outside (-1, 0.5)"
        )));
    }
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    Ok((mu, lambda))
}

/// Recovers (E, nu) from the Lame pair; inverse of [`lame_from_elastic`].
pub fn elastic_from_lame(mu: f64, lambda: f64) -> (f64, f64) {
    let e = mu * (3.0 * lambda + 2.0 * mu) / (lambda + mu);
    let nu = lambda / (2.0 * (lambda + mu));
    (e, nu)
}

/// Neo-Hookean energy density (J/m^3). Errors when `det(F) <= 0`.
pub fn neo_hookean_energy(f: &Matrix3<f64>, params: &MaterialParams) -> Result<f64, MaterialError> {
    let j = f.determinant();
    if j <= 0.0 {
        return Err(MaterialError::ElementInversion { det: j });
    }
    let log_j = j.ln();
    let i_c = (f.transpose() * f).trace();
    Ok(params.mu / 2.0 * (i_c - 3.0) - params.mu * log_j + params.lambda / 2.0 * log_j * log_j)
}

/// First Piola-Kirchhoff stress `P = mu (F - F^-T) + lambda ln J F^-T`.
pub fn first_piola_stress(
    f: &Matrix3<f64>,
    params: &MaterialParams,
) -> Result<Matrix3<f64>, MaterialError> {
    let j = f.determinant();
    if j <= 0.0 {
        return Err(MaterialError::ElementInversion { det: j });
    }
    let f_inv_t = f
        .try_inverse()
        .ok_or(MaterialError::ElementInversion { det: j })?
        .transpose();
    Ok(params.mu * (f - f_inv_t) + params.lambda * j.ln() * f_inv_t)
}

/// Stress derivative `dP/dF` as a 9x9 matrix over column-major vec(F).
///
/// With `B = F^-T`:
/// `H[(i,j),(k,l)] = mu d_ik d_jl + (mu - lambda ln J) B_il B_kj + lambda B_ij B_kl`.
pub fn stress_derivative(
    f: &Matrix3<f64>,
    params: &MaterialParams,
) -> Result<SMatrix<f64, 9, 9>, MaterialError> {
    let j = f.determinant();
    if j <= 0.0 {
        return Err(MaterialError::ElementInversion { det: j });
    }
    let b = f
        .try_inverse()
        .ok_or(MaterialError::ElementInversion { det: j })?
        .transpose();
    let log_j = j.ln();
    let c1 = params.mu - params.lambda * log_j;
    let mut h = SMatrix::<f64, 9, 9>::zeros();
    for i in 0..3 {
        for jj in 0..3 {
            let row = i + 3 * jj; // column-major vec index of F[i,jj]
            for k in 0..3 {
                for l in 0..3 {
                    let col = k + 3 * l;
                    let mut v = c1 * b[(i, l)] * b[(k, jj)] + params.lambda * b[(i, jj)] * b[(k, l)];
                    if i == k && jj == l {
                        v += params.mu;
                    }
                    h[(row, col)] = v;
                }
            }
        }
    }
    Ok(h)
}

/// Clamps negative eigenvalues of a symmetric 9x9 block to zero and returns a
/// factor `S` with `S^T S = proj(H)`. Used for Gauss-Newton style Hessians.
pub fn psd_factor(h: &SMatrix<f64, 9, 9>) -> SMatrix<f64, 9, 9> {
    let sym = (h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut s = SMatrix::<f64, 9, 9>::zeros();
    for c in 0..9 {
        let lam = eig.eigenvalues[c].max(0.0).sqrt();
        for r in 0..9 {
            // rows of S are sqrt(lambda_c) * v_c^T
            s[(c, r)] = lam * eig.eigenvectors[(r, c)];
        }
    }
    s
}
