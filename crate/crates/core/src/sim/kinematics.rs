//! The reduced deformation map and its derivatives.
//!
//! Each of the M handles carries a 3x4 affine transform `Z_m = [A_m | b_m]`.
//! The flat DOF vector uses handle-major, row-major layout:
//! `z[m*12 + r*4 + c] = Z_m[r, c]`. A material point X deforms as
//! `x = X + sum_m W_m(X) * Z_m * [X; 1]`, which is linear in z.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::skinning::{SkinningField, WeightEval};

/// DOFs per handle: a flattened 3x4 transform.
pub const DOF_PER_HANDLE: usize = 12;

#[inline]
pub fn dof_index(m: usize, r: usize, c: usize) -> usize {
    m * DOF_PER_HANDLE + r * 4 + c
}

/// Homogeneous material coordinate [X; 1].
#[inline]
pub fn homog(x: &Vector3<f64>) -> [f64; 4] {
    [x.x, x.y, x.z, 1.0]
}

/// `Z_m * [X; 1]` for handle m.
#[inline]
pub fn handle_apply(z: &DVector<f64>, m: usize, h: &[f64; 4]) -> Vector3<f64> {
    let base = m * DOF_PER_HANDLE;
    let mut out = Vector3::zeros();
    for r in 0..3 {
        let row = base + r * 4;
        out[r] = z[row] * h[0] + z[row + 1] * h[1] + z[row + 2] * h[2] + z[row + 3] * h[3];
    }
    out
}

/// The 3x3 linear block A_m of handle m.
#[inline]
pub fn handle_linear(z: &DVector<f64>, m: usize) -> Matrix3<f64> {
    let base = m * DOF_PER_HANDLE;
    Matrix3::from_fn(|r, c| z[base + r * 4 + c])
}

/// Deformed position given a precomputed weight evaluation.
pub fn deform_point_eval(x_rest: &Vector3<f64>, z: &DVector<f64>, eval: &WeightEval) -> Vector3<f64> {
    let h = homog(x_rest);
    let mut x = *x_rest;
    for m in 0..eval.weights.len() {
        x += eval.weights[m] * handle_apply(z, m, &h);
    }
    x
}

/// Deformed position `x = X + sum_m W_m(X) Z_m [X;1]`.
pub fn deform_point(x_rest: &Vector3<f64>, z: &DVector<f64>, skinning: &SkinningField) -> Vector3<f64> {
    deform_point_eval(x_rest, z, &skinning.eval(x_rest))
}

/// Deformation gradient given a precomputed weight evaluation:
/// `F = I + sum_m [ W_m A_m + (Z_m [X;1]) outer grad W_m ]`.
pub fn deformation_gradient_eval(
    x_rest: &Vector3<f64>,
    z: &DVector<f64>,
    eval: &WeightEval,
) -> Matrix3<f64> {
    let h = homog(x_rest);
    let mut f = Matrix3::identity();
    for m in 0..eval.weights.len() {
        let a = handle_linear(z, m);
        let u = handle_apply(z, m, &h);
        let g = eval.jacobian.row(m);
        for i in 0..3 {
            for j in 0..3 {
                f[(i, j)] += eval.weights[m] * a[(i, j)] + u[i] * g[j];
            }
        }
    }
    f
}

/// Deformation gradient of the reduced map at X.
pub fn deformation_gradient(
    x_rest: &Vector3<f64>,
    z: &DVector<f64>,
    skinning: &SkinningField,
) -> Matrix3<f64> {
    deformation_gradient_eval(x_rest, z, &skinning.eval(x_rest))
}

/// Writes the constant `dvec(F)/dz` block for one point into `out` rows
/// `[9*row_block .. 9*row_block+9)`. vec(F) is column-major: row `i + 3*j`
/// holds F[i, j].
pub fn write_df_dz(
    out: &mut DMatrix<f64>,
    row_block: usize,
    x_rest: &Vector3<f64>,
    eval: &WeightEval,
) {
    let h = homog(x_rest);
    let base_row = 9 * row_block;
    let m_count = eval.weights.len();
    for m in 0..m_count {
        let w = eval.weights[m];
        let g = eval.jacobian.row(m);
        for i in 0..3 {
            for j in 0..3 {
                let row = base_row + i + 3 * j;
                // c < 3 columns: W_m * d(A)[i,j] + X_c * gradW[j] on row i.
                for c in 0..3 {
                    let mut v = h[c] * g[j];
                    if j == c {
                        v += w;
                    }
                    out[(row, dof_index(m, i, c))] = v;
                }
                // translation column
                out[(row, dof_index(m, i, 3))] = g[j];
            }
        }
    }
}

/// `J^T v` for the position Jacobian `J = dx/dz` at one point:
/// `(J^T v)[(m,r,c)] = W_m * h_c * v_r`. Accumulates scaled by `scale`.
pub fn accumulate_jt_vec(
    out: &mut DVector<f64>,
    x_rest: &Vector3<f64>,
    eval: &WeightEval,
    v: &Vector3<f64>,
    scale: f64,
) {
    let h = homog(x_rest);
    for m in 0..eval.weights.len() {
        let wm = scale * eval.weights[m];
        for r in 0..3 {
            let base = dof_index(m, r, 0);
            for c in 0..4 {
                out[base + c] += wm * h[c] * v[r];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skinning::DomainBox;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box() -> DomainBox {
        DomainBox::new(Vector3::new(-0.5, -0.5, -0.5), Vector3::new(0.5, 0.5, 0.5))
    }

    fn random_z(m: usize, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(12 * m, |_, _| (rng.gen::<f64>() * 2.0 - 1.0) * scale)
    }

    #[test]
    fn zero_dofs_is_identity_map() {
        let field = SkinningField::random(4, unit_box(), 3);
        let z = DVector::zeros(48);
        let x = Vector3::new(0.21, -0.4, 0.11);
        assert_eq!(deform_point(&x, &z, &field), x);
        assert_eq!(deformation_gradient(&x, &z, &field), Matrix3::identity());
    }

    #[test]
    fn constant_weight_translation() {
        let field = SkinningField::constant_one(unit_box());
        let mut z = DVector::zeros(12);
        let t = Vector3::new(0.3, -0.8, 1.5);
        z[dof_index(0, 0, 3)] = t.x;
        z[dof_index(0, 1, 3)] = t.y;
        z[dof_index(0, 2, 3)] = t.z;
        let x = Vector3::new(0.1, 0.2, -0.3);
        assert_eq!(deform_point(&x, &z, &field), x + t);
        // Pure translation leaves F = I.
        assert_eq!(deformation_gradient(&x, &z, &field), Matrix3::identity());
    }

    #[test]
    fn constant_weight_affine_gradient_is_i_plus_a() {
        let field = SkinningField::constant_one(unit_box());
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = random_z(1, 0.2, &mut rng);
        let x = Vector3::new(0.05, -0.1, 0.2);
        let f = deformation_gradient(&x, &z, &field);
        let a = handle_linear(&z, 0);
        assert!((f - (Matrix3::identity() + a)).norm() < 1e-15);
    }

    #[test]
    fn deform_matches_naive_loops() {
        let field = SkinningField::random(5, unit_box(), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let z = random_z(5, 0.5, &mut rng);
        for _ in 0..30 {
            let x = Vector3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            );
            let eval = field.eval(&x);
            // Naive re-implementation with explicit index arithmetic.
            let mut expect = x;
            let h = [x.x, x.y, x.z, 1.0];
            for m in 0..5 {
                for r in 0..3 {
                    let mut acc = 0.0;
                    for c in 0..4 {
                        acc += z[m * 12 + r * 4 + c] * h[c];
                    }
                    expect[r] += eval.weights[m] * acc;
                }
            }
            let got = deform_point(&x, &z, &field);
            assert!((got - expect).norm() <= 1e-12);
        }
    }

    #[test]
    fn deform_is_linear_in_z() {
        let field = SkinningField::random(3, unit_box(), 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let z1 = random_z(3, 0.7, &mut rng);
        let z2 = random_z(3, 0.7, &mut rng);
        let x = Vector3::new(0.2, 0.3, -0.1);
        let a = deform_point(&x, &z1, &field) - x;
        let b = deform_point(&x, &z2, &field) - x;
        let ab = deform_point(&x, &(&z1 + &z2), &field) - x;
        assert!((ab - (a + b)).norm() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences_of_map() {
        let field = SkinningField::random(4, unit_box(), 31);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let z = random_z(4, 0.1, &mut rng);
        let h = 1e-5;
        for _ in 0..20 {
            let x = Vector3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            );
            let f = deformation_gradient(&x, &z, &field);
            let mut fd = Matrix3::zeros();
            for c in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[c] += h;
                xm[c] -= h;
                let dp = deform_point(&xp, &z, &field);
                let dm = deform_point(&xm, &z, &field);
                for r in 0..3 {
                    fd[(r, c)] = (dp[r] - dm[r]) / (2.0 * h);
                }
            }
            let rel = (f - fd).norm() / f.norm();
            assert!(rel < 1e-4, "relative gradient error {rel}");
        }
    }

    #[test]
    fn df_dz_block_matches_finite_differences() {
        let field = SkinningField::random(3, unit_box(), 55);
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let z = random_z(3, 0.2, &mut rng);
        let x = Vector3::new(0.12, -0.3, 0.22);
        let eval = field.eval(&x);
        let mut g = DMatrix::zeros(9, 36);
        write_df_dz(&mut g, 0, &x, &eval);
        let h = 1e-6;
        for k in 0..36 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            let fp = deformation_gradient_eval(&x, &zp, &eval);
            let fm = deformation_gradient_eval(&x, &zm, &eval);
            for i in 0..3 {
                for j in 0..3 {
                    let num = (fp[(i, j)] - fm[(i, j)]) / (2.0 * h);
                    assert!(
                        (num - g[(i + 3 * j, k)]).abs() < 1e-8,
                        "G[({i},{j}),{k}]"
                    );
                }
            }
        }
    }
}
