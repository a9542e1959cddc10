//! Physical parameter identification: minimize rendered-vs-reference pixel
//! loss over (log10 E, nu) with finite-difference gradient descent, simulating
//! and rendering per evaluation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{loss_sim, FrameSequence, IdentificationResult, SysIdError};
use crate::materials::MaterialParams;
use crate::render::{render, render_with_adjoint};
use crate::sim::kinematics::{handle_apply, homog};
use crate::sim::{simulate, ReducedModel, SceneConditions};
use crate::skinning::{mlp, SkinningField};

/// Loss assigned to evaluations whose simulation diverged.
pub const DIVERGED_LOSS: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct IdentifyHyper {
    pub max_iterations: usize,
    /// Relative central-difference step on log10 E.
    pub rel_step_log_e: f64,
    /// Absolute central-difference step on nu.
    pub abs_step_nu: f64,
    pub nu_bounds: (f64, f64),
    /// Initial trust-region step sizes (normalized-gradient descent).
    pub step_log_e: f64,
    pub step_nu: f64,
    /// Stop when both steps shrink below these floors.
    pub min_step_log_e: f64,
    pub min_step_nu: f64,
    /// Converged when the best loss (mean squared pixel distance on unit
    /// range) drops below this; 1e-4 is ~40 dB, deep inside the basin.
    pub loss_tol: f64,
    /// Stop after this many consecutive iterations without a relative
    /// best-loss improvement of at least `stall_rel`.
    pub stall_iterations: usize,
    pub stall_rel: f64,
    /// Optional skinning fine-tuning through the render-gradient path at
    /// fixed dynamics (an approximation; off by default).
    pub finetune_theta: bool,
    pub theta_lr: f64,
}

impl Default for IdentifyHyper {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            rel_step_log_e: 1e-2,
            abs_step_nu: 5e-3,
            nu_bounds: (0.05, 0.45),
            step_log_e: 0.25,
            step_nu: 0.04,
            min_step_log_e: 2e-3,
            min_step_nu: 1e-3,
            loss_tol: 1e-4,
            stall_iterations: 15,
            stall_rel: 1e-2,
            finetune_theta: false,
            theta_lr: 5e-7,
        }
    }
}

/// One simulate+render evaluation, in evaluation order.
#[derive(Debug, Clone)]
pub struct IdentifyRecord {
    pub iteration: usize,
    pub log10_e: f64,
    pub nu: f64,
    pub loss: f64,
}

/// Simulates and renders at (log10 E, nu); diverged runs get the sentinel.
fn eval_params(
    model: &ReducedModel,
    conditions: &SceneConditions,
    reference: &FrameSequence,
    log10_e: f64,
    nu: f64,
) -> f64 {
    let Ok(material) = model.material.with_elastic(10f64.powf(log10_e), nu) else {
        return DIVERGED_LOSS;
    };
    let model = model.with_material(material);
    let steps = reference.frames.len().saturating_sub(1);
    let Ok(traj) = simulate(&model, conditions, steps, reference.dt) else {
        return DIVERGED_LOSS;
    };
    let bg = reference.frames[0].background;
    let rendered = FrameSequence {
        frames: traj
            .frames
            .iter()
            .map(|f| render(&f.field, &reference.camera, bg))
            .collect(),
        camera: reference.camera.clone(),
        dt: reference.dt,
    };
    loss_sim(&rendered, reference).unwrap_or(DIVERGED_LOSS)
}

/// Recovers (E, nu) from a reference sequence produced under `conditions`.
///
/// `model` carries the rest field, skinning caches, cubature, and the initial
/// material; density is kept fixed and only the elastic pair is optimized.
/// With `finetune_theta` the skinning parameters additionally take one
/// render-gradient step per accepted iteration, holding the dynamics fixed.
pub fn identify_parameters(
    model: &ReducedModel,
    skinning: &SkinningField,
    conditions: &SceneConditions,
    reference: &FrameSequence,
    init: MaterialParams,
    hyper: &IdentifyHyper,
) -> Result<IdentificationResult, SysIdError> {
    reference.validate()?;
    let mut skinning = skinning.clone();
    let mut model = model.with_material(init);

    let clamp_nu = |nu: f64| nu.clamp(hyper.nu_bounds.0, hyper.nu_bounds.1);
    let mut le = init.youngs_modulus.log10();
    let mut nu = clamp_nu(init.poissons_ratio);
    let mut records = Vec::new();
    let mut loss_curve = Vec::new();

    let mut current = eval_params(&model, conditions, reference, le, nu);
    records.push(IdentifyRecord {
        iteration: 0,
        log10_e: le,
        nu,
        loss: current,
    });
    let mut best = (current, le, nu);
    loss_curve.push(current);

    let mut step_e = hyper.step_log_e;
    let mut step_nu = hyper.step_nu;
    let mut iterations = 0;
    let mut stall = 0usize;

    for iter in 1..=hyper.max_iterations {
        if best.0 <= hyper.loss_tol {
            break;
        }
        if step_e <= hyper.min_step_log_e && step_nu <= hyper.min_step_nu {
            break;
        }
        if stall >= hyper.stall_iterations {
            break;
        }
        iterations = iter;

        // Central differences; the four probes are independent simulations.
        let h_e = (hyper.rel_step_log_e * le.abs()).max(1e-3);
        let h_nu = hyper.abs_step_nu;
        let probes = [
            (le + h_e, nu),
            (le - h_e, nu),
            (le, nu + h_nu),
            (le, nu - h_nu),
        ];
        let losses: Vec<f64> = probes
            .par_iter()
            .map(|&(a, b)| eval_params(&model, conditions, reference, a, b))
            .collect();
        for (k, &(a, b)) in probes.iter().enumerate() {
            records.push(IdentifyRecord {
                iteration: iter,
                log10_e: a,
                nu: b,
                loss: losses[k],
            });
        }
        let g_e = (losses[0] - losses[1]) / (2.0 * h_e);
        let g_nu = (losses[2] - losses[3]) / (2.0 * h_nu);

        // Normalized-gradient step with per-parameter trust regions.
        let de = if g_e.abs() > 0.0 { -step_e * g_e.signum() } else { 0.0 };
        let dn = if g_nu.abs() > 0.0 { -step_nu * g_nu.signum() } else { 0.0 };
        let cand_le = le + de;
        let cand_nu = clamp_nu(nu + dn);
        let cand_loss = eval_params(&model, conditions, reference, cand_le, cand_nu);
        records.push(IdentifyRecord {
            iteration: iter,
            log10_e: cand_le,
            nu: cand_nu,
            loss: cand_loss,
        });

        if cand_loss < current {
            le = cand_le;
            nu = cand_nu;
            current = cand_loss;
            step_e = (step_e * 1.2).min(hyper.step_log_e * 2.0);
            step_nu = (step_nu * 1.2).min(hyper.step_nu * 2.0);

            if hyper.finetune_theta {
                if let Some((skin2, model2)) = theta_step(
                    &model, &skinning, conditions, reference, le, nu, hyper.theta_lr,
                ) {
                    skinning = skin2;
                    model = model2;
                    current = eval_params(&model, conditions, reference, le, nu);
                    records.push(IdentifyRecord {
                        iteration: iter,
                        log10_e: le,
                        nu,
                        loss: current,
                    });
                }
            }
        } else {
            step_e = (step_e * 0.5).max(hyper.min_step_log_e * 0.5);
            step_nu = (step_nu * 0.5).max(hyper.min_step_nu * 0.5);
        }
        if current < best.0 * (1.0 - hyper.stall_rel) {
            stall = 0;
        } else {
            stall += 1;
        }
        if current < best.0 {
            best = (current, le, nu);
        }
        loss_curve.push(best.0);
    }

    Ok(IdentificationResult {
        log10_e: best.1,
        nu: best.2,
        loss_curve,
        iterations,
        evaluations: records,
    })
}

/// One gradient step on the skinning parameters through the rendered frames,
/// holding the trajectory fixed: the hull points move as
/// `x_k = X_k + sum_m W_m(X_k) Z_m [X_k;1]`, so
/// `dL/dW_m(X_k) = (Z_m [X_k;1]) . dL/dx_k`, backpropagated into theta.
#[allow(clippy::too_many_arguments)]
fn theta_step(
    model: &ReducedModel,
    skinning: &SkinningField,
    conditions: &SceneConditions,
    reference: &FrameSequence,
    le: f64,
    nu: f64,
    lr: f64,
) -> Option<(SkinningField, ReducedModel)> {
    let material = model.material.with_elastic(10f64.powf(le), nu).ok()?;
    let sim_model = model.with_material(material);
    let steps = reference.frames.len().saturating_sub(1);
    let traj = simulate(&sim_model, conditions, steps, reference.dt).ok()?;
    let bg = reference.frames[0].background;
    let norm = 1.0
        / (reference.frames.len() as f64
            * (reference.frames[0].pixels.len()) as f64);

    let arch = skinning.arch();
    let mut grad = vec![0.0; skinning.params().len()];
    for (frame, reference_img) in traj.frames.iter().zip(&reference.frames) {
        let rendered = render(&frame.field, &reference.camera, bg);
        let mut adj = vec![[0.0; 3]; rendered.pixels.len()];
        for (i, (r, t)) in rendered.pixels.iter().zip(&reference_img.pixels).enumerate() {
            for c in 0..3 {
                adj[i][c] = 2.0 * (r[c] - t[c]) * norm;
            }
        }
        let g = render_with_adjoint(&frame.field, &reference.camera, bg, &adj);
        let z = &frame.state.z;
        let m = skinning.num_handles();
        let zero_jac = DMatrix::zeros(m, 3);
        for (pi, prim) in sim_model.rest_field.rest_primitives.iter().enumerate() {
            for (k, x_rest) in prim.points.iter().enumerate() {
                let gx = g.points[pi][k];
                if gx == nalgebra::Vector3::zeros() {
                    continue;
                }
                let h = homog(x_rest);
                let mut g_out = DVector::zeros(m);
                for hm in 0..m {
                    g_out[hm] = handle_apply(z, hm, &h).dot(&gx);
                }
                let (norm_in, scale) = skinning.normalized_input(x_rest);
                let cache = mlp::forward_cached(arch, skinning.params(), &norm_in, &scale);
                mlp::backward(arch, skinning.params(), &cache, &g_out, &zero_jac, &mut grad);
            }
        }
    }

    let mut tuned = skinning.clone();
    for (p, g) in tuned.params_mut().iter_mut().zip(&grad) {
        *p -= lr * g;
    }
    let rebuilt = ReducedModel::new(
        model.rest_field.clone(),
        &tuned,
        model.material,
        model.cubature.clone(),
    )
    .ok()?;
    Some((tuned, rebuilt))
}
