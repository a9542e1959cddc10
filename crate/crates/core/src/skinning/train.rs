//! Data-free training of the skinning basis.
//!
//! Loss per step, on a cubature batch and one random reduced-DOF sample z:
//!   L = lambda_elastic * sum_i w_i Psi(F(X_i, z, theta))
//!     + lambda_ortho * sum_{a,b} (G_ab - delta_ab)^2,
//! where G is the cubature-weighted Gram matrix of the handle weight
//! functions. The z magnitude anneals from large to small so the basis first
//! learns gross motions, then refines small ones.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::cubature::CubatureSet;
use super::mlp;
use super::{SkinningError, SkinningField};
use crate::materials::{self, MaterialParams};
use crate::sim::kinematics::{handle_apply, handle_linear, homog, DOF_PER_HANDLE};

#[derive(Debug, Clone)]
pub struct TrainHyper {
    pub steps: usize,
    pub learning_rate: f64,
    /// Cubature points per step; capped at the cubature size.
    pub batch: usize,
    pub lambda_elastic: f64,
    /// Must dominate the (mu*V-normalized) elastic term at the annealing
    /// start, or the basis collapses to W == 0; see the default.
    pub lambda_ortho: f64,
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            steps: 10_000,
            learning_rate: 1e-3,
            batch: 128,
            lambda_elastic: 1.0,
            lambda_ortho: 10.0,
            sigma_start: 1.0,
            sigma_end: 0.1,
            seed: 0,
        }
    }
}

/// Recorded training diagnostics.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub loss: Vec<f64>,
    pub elastic: Vec<f64>,
    pub ortho: Vec<f64>,
    /// Off-diagonal Gram residual sum_{a != b} G_ab^2 per step.
    pub ortho_offdiag: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.loss.last().unwrap_or(&f64::NAN)
    }
}

/// Normalized Gram matrix `G_ab = sum_i w_i W_a(X_i) W_b(X_i) / sum_i w_i`.
pub fn gram_matrix(field: &SkinningField, cubature: &CubatureSet) -> DMatrix<f64> {
    let m = field.num_handles();
    let mut g = DMatrix::zeros(m, m);
    let mut total = 0.0;
    for (x, &w) in cubature.points.iter().zip(&cubature.weights) {
        let e = field.eval(x);
        total += w;
        for a in 0..m {
            for b in 0..m {
                g[(a, b)] += w * e.weights[a] * e.weights[b];
            }
        }
    }
    if total > 0.0 {
        g /= total;
    }
    g
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t as i32);
        let c2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
        }
    }
}

/// Trains a skinning field on the rest geometry. Bit-reproducible given
/// (seed, hyper, rest cubature).
pub fn train_skinning(
    cubature: &CubatureSet,
    material: &MaterialParams,
    num_handles: usize,
    domain_box: super::DomainBox,
    hyper: &TrainHyper,
) -> Result<(SkinningField, TrainReport), SkinningError> {
    let mut field = SkinningField::init(num_handles, domain_box, hyper.seed);
    // W == 0 is a stationary point of the loss (both terms have gradients
    // proportional to W there), so break the symmetry with a tiny final
    // layer. z = 0 still maps every point to rest for any theta.
    field.seed_final_layer(1e-2, hyper.seed.wrapping_add(0xf17a1));
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(0x7ea1_0001));
    let n = cubature.len();
    let batch = hyper.batch.min(n).max(1);
    let dof = DOF_PER_HANDLE * num_handles;
    let mut adam = Adam::new(field.params().len());
    let mut report = TrainReport {
        loss: Vec::with_capacity(hyper.steps),
        elastic: Vec::with_capacity(hyper.steps),
        ortho: Vec::with_capacity(hyper.steps),
        ortho_offdiag: Vec::with_capacity(hyper.steps),
    };

    for step in 0..hyper.steps {
        // Annealed z magnitude.
        let frac = if hyper.steps > 1 {
            step as f64 / (hyper.steps - 1) as f64
        } else {
            0.0
        };
        let sigma = hyper.sigma_start + (hyper.sigma_end - hyper.sigma_start) * frac;
        let mut z = if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).unwrap();
            DVector::from_fn(dof, |_, _| normal.sample(&mut rng))
        } else {
            DVector::zeros(dof)
        };

        // Batch without replacement (all points, in order, when batch == n).
        let idx: Vec<usize> = if batch >= n {
            (0..n).collect()
        } else {
            rand::seq::index::sample(&mut rng, n, batch).into_vec()
        };

        let (loss_el, loss_or, offdiag, grad) =
            step_loss_and_grad(&field, cubature, material, &idx, &mut z, hyper, n)?;
        let loss = hyper.lambda_elastic * loss_el + hyper.lambda_ortho * loss_or;
        if !loss.is_finite() {
            return Err(SkinningError::NonFiniteLoss {
                step,
                elastic: loss_el,
                ortho: loss_or,
            });
        }
        report.loss.push(loss);
        report.elastic.push(loss_el);
        report.ortho.push(loss_or);
        report.ortho_offdiag.push(offdiag);
        adam.step(field.params_mut(), &grad, hyper.learning_rate);
    }
    Ok((field, report))
}

/// One loss/gradient evaluation. Halves `z` until no batch element inverts
/// (the annealed samples can be large early in training); falls back to z = 0,
/// where the elastic term is exactly zero.
#[allow(clippy::too_many_arguments)]
fn step_loss_and_grad(
    field: &SkinningField,
    cubature: &CubatureSet,
    material: &MaterialParams,
    idx: &[usize],
    z: &mut DVector<f64>,
    hyper: &TrainHyper,
    n_total: usize,
) -> Result<(f64, f64, f64, Vec<f64>), SkinningError> {
    let m = field.num_handles();
    let arch = field.arch();
    let caches: Vec<(mlp::ForwardCache, Vector3<f64>)> = idx
        .par_iter()
        .map(|&i| {
            let x = cubature.points[i];
            let (norm, scale) = field.normalized_input(&x);
            (mlp::forward_cached(arch, field.params(), &norm, &scale), x)
        })
        .collect();

    // Inversion guard on the sampled z.
    let det_ok = |z: &DVector<f64>| -> bool {
        caches.iter().all(|(c, x)| {
            let f = gradient_from_cache(c, x, z, m);
            f.determinant() > 0.05
        })
    };
    if !det_ok(z) {
        let mut halved = false;
        for _ in 0..60 {
            *z *= 0.5;
            if det_ok(z) {
                halved = true;
                break;
            }
        }
        if !halved {
            z.fill(0.0);
        }
    }

    // Batch integral scale: the batch estimates the full cubature sum. The
    // elastic term is additionally normalized by mu * volume so that the
    // default loss weights are independent of material stiffness and scene
    // scale (the raw energy density is in Pa and would swamp the ortho term).
    let volume: f64 = cubature.weights.iter().sum();
    let scale_el = n_total as f64 / (idx.len() as f64 * material.mu * volume.max(1e-30));

    // Gram over the batch.
    let total_w: f64 = idx.iter().map(|&i| cubature.weights[i]).sum();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for (k, &i) in idx.iter().enumerate() {
        let w = cubature.weights[i] / total_w;
        let wv = caches[k].0.acts.last().unwrap();
        for a in 0..m {
            for b in 0..m {
                gram[(a, b)] += w * wv[a] * wv[b];
            }
        }
    }
    let mut loss_or = 0.0;
    let mut offdiag = 0.0;
    for a in 0..m {
        for b in 0..m {
            let d = gram[(a, b)] - if a == b { 1.0 } else { 0.0 };
            loss_or += d * d;
            if a != b {
                offdiag += d * d;
            }
        }
    }

    // Per-point losses and parameter gradients, reduced in fixed chunk order.
    let chunk = crate::parallel::CHUNK;
    let n_chunks = idx.len().div_ceil(chunk);
    let parts: Vec<Result<(f64, Vec<f64>), SkinningError>> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let lo = ci * chunk;
            let hi = (lo + chunk).min(idx.len());
            let mut grad = vec![0.0; field.params().len()];
            let mut loss_el = 0.0;
            for k in lo..hi {
                let i = idx[k];
                let (cache, x) = &caches[k];
                let w_i = cubature.weights[i];
                let weights = cache.acts.last().unwrap();
                let jac = cache.jacs.last().unwrap();

                let f = gradient_from_eval(weights, jac, x, z, m);
                let (psi, piola) = match (
                    materials::neo_hookean_energy(&f, material),
                    materials::first_piola_stress(&f, material),
                ) {
                    (Ok(a), Ok(b)) => (a, b),
                    _ => {
                        return Err(SkinningError::NonFiniteLoss {
                            step: usize::MAX,
                            elastic: f64::NAN,
                            ortho: f64::NAN,
                        })
                    }
                };
                loss_el += w_i * psi;

                // Upstream adjoints for the network outputs and Jacobian.
                let h = homog(x);
                let mut g_out = DVector::zeros(m);
                let mut g_jac = DMatrix::zeros(m, 3);
                let cel = hyper.lambda_elastic * scale_el * w_i;
                for hm in 0..m {
                    let a_m = handle_linear(z, hm);
                    let u_m = handle_apply(z, hm, &h);
                    let mut dot = 0.0;
                    for r in 0..3 {
                        for c in 0..3 {
                            dot += piola[(r, c)] * a_m[(r, c)];
                        }
                    }
                    g_out[hm] = cel * dot;
                    let ptu = piola.transpose() * u_m;
                    for c in 0..3 {
                        g_jac[(hm, c)] = cel * ptu[c];
                    }
                }
                // Ortho adjoint: 4 w_hat (G - I) W.
                let w_hat = w_i / total_w;
                for a in 0..m {
                    let mut acc = 0.0;
                    for b in 0..m {
                        let d = gram[(a, b)] - if a == b { 1.0 } else { 0.0 };
                        acc += d * weights[b];
                    }
                    g_out[a] += hyper.lambda_ortho * 4.0 * w_hat * acc;
                }

                mlp::backward(arch, field.params(), cache, &g_out, &g_jac, &mut grad);
            }
            Ok((loss_el, grad))
        })
        .collect();

    let mut grad = vec![0.0; field.params().len()];
    let mut loss_el = 0.0;
    for p in parts {
        let (le, g) = p?;
        loss_el += le;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((scale_el * loss_el, loss_or, offdiag, grad))
}

fn gradient_from_cache(
    cache: &mlp::ForwardCache,
    x: &Vector3<f64>,
    z: &DVector<f64>,
    m: usize,
) -> nalgebra::Matrix3<f64> {
    gradient_from_eval(cache.acts.last().unwrap(), cache.jacs.last().unwrap(), x, z, m)
}

fn gradient_from_eval(
    weights: &DVector<f64>,
    jac: &DMatrix<f64>,
    x: &Vector3<f64>,
    z: &DVector<f64>,
    m: usize,
) -> nalgebra::Matrix3<f64> {
    let h = homog(x);
    let mut f = nalgebra::Matrix3::identity();
    for hm in 0..m {
        let a = handle_linear(z, hm);
        let u = handle_apply(z, hm, &h);
        for i in 0..3 {
            for j in 0..3 {
                f[(i, j)] += weights[hm] * a[(i, j)] + u[i] * jac[(hm, j)];
            }
        }
    }
    f
}
