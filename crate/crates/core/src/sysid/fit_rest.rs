//! Rest-field reconstruction from multi-view first frames: gradient descent on
//! hull points, colors, and opacities through the differentiable renderer.
//!
//! Loss per view: `(1 - lambda) L1 + lambda (1 - SSIM)/2`, plus a mean-opacity
//! penalty that stands in for the primitive-count regularizer.

use nalgebra::Vector3;

use super::metrics::{ssim, ssim_backward};
use super::SysIdError;
use crate::convex::{ConvexField, ConvexPrimitive};
use crate::render::{render, render_with_adjoint, Camera, FieldGradients, Image};

#[derive(Debug, Clone)]
pub struct FitRestHyper {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Weight of the D-SSIM term.
    pub lambda_dssim: f64,
    /// Weight of the mean-opacity penalty.
    pub beta_opacity: f64,
}

impl Default for FitRestHyper {
    fn default() -> Self {
        Self {
            iterations: 500,
            learning_rate: 5e-3,
            lambda_dssim: 0.2,
            beta_opacity: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitRestResult {
    pub field: ConvexField,
    pub loss_curve: Vec<f64>,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl AdamState {
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

fn flatten(field: &ConvexField) -> Vec<f64> {
    let mut p = Vec::new();
    for prim in &field.primitives {
        for pt in &prim.points {
            p.extend_from_slice(&[pt.x, pt.y, pt.z]);
        }
    }
    for prim in &field.primitives {
        p.extend_from_slice(&prim.color);
    }
    for prim in &field.primitives {
        p.push(prim.opacity);
    }
    p
}

fn flatten_grads(field: &ConvexField, g: &FieldGradients) -> Vec<f64> {
    let mut out = Vec::new();
    for prim in &g.points {
        for pt in prim {
            out.extend_from_slice(&[pt.x, pt.y, pt.z]);
        }
    }
    for c in &g.colors {
        out.extend_from_slice(c);
    }
    for &o in &g.opacities {
        out.push(o);
    }
    debug_assert_eq!(out.len(), flatten(field).len());
    out
}

/// Rebuilds the field from the flat parameter vector. Colors and opacities
/// are clamped to [0,1]; hull recomputation can fail on degenerate points.
fn unflatten(template: &ConvexField, params: &[f64]) -> Result<ConvexField, SysIdError> {
    let mut pos = 0;
    let mut point_sets = Vec::with_capacity(template.primitives.len());
    for prim in &template.primitives {
        let mut pts = Vec::with_capacity(prim.points.len());
        for _ in 0..prim.points.len() {
            pts.push(Vector3::new(params[pos], params[pos + 1], params[pos + 2]));
            pos += 3;
        }
        point_sets.push(pts);
    }
    let mut colors = Vec::with_capacity(template.primitives.len());
    for _ in &template.primitives {
        colors.push([
            params[pos].clamp(0.0, 1.0),
            params[pos + 1].clamp(0.0, 1.0),
            params[pos + 2].clamp(0.0, 1.0),
        ]);
        pos += 3;
    }
    let mut opacities = Vec::with_capacity(template.primitives.len());
    for _ in &template.primitives {
        opacities.push(params[pos].clamp(0.0, 1.0));
        pos += 1;
    }
    let primitives = template
        .primitives
        .iter()
        .enumerate()
        .map(|(i, prim)| {
            ConvexPrimitive::new(
                point_sets[i].clone(),
                colors[i],
                opacities[i],
                prim.smoothness,
                prim.sharpness,
            )
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(crate::sim::SimError::Convex)?;
    Ok(ConvexField {
        rest_primitives: primitives.clone(),
        primitives,
    })
}

/// Loss and adjoint-image for one view.
fn view_loss_and_adjoint(
    rendered: &Image,
    reference: &Image,
    lambda: f64,
) -> Result<(f64, Vec<[f64; 3]>), SysIdError> {
    let p3 = (rendered.pixels.len() * 3) as f64;
    let mut l1 = 0.0;
    let mut adj = vec![[0.0; 3]; rendered.pixels.len()];
    for (i, (r, t)) in rendered.pixels.iter().zip(&reference.pixels).enumerate() {
        for c in 0..3 {
            let d = r[c] - t[c];
            l1 += d.abs();
            adj[i][c] = (1.0 - lambda) * d.signum() / p3;
        }
    }
    l1 /= p3;
    let s = ssim(rendered, reference)?;
    let ds = ssim_backward(rendered, reference)?;
    for (a, g) in adj.iter_mut().zip(&ds) {
        for c in 0..3 {
            a[c] += lambda * (-0.5) * g[c];
        }
    }
    Ok(((1.0 - lambda) * l1 + lambda * (1.0 - s) / 2.0, adj))
}

/// Fits the rest field to `views` (camera, reference image of frame 0).
/// Returns the best-loss field and the recorded loss curve.
pub fn fit_rest_field(
    views: &[(Camera, Image)],
    init_field: &ConvexField,
    hyper: &FitRestHyper,
) -> Result<FitRestResult, SysIdError> {
    if views.len() < 2 {
        return Err(SysIdError::ShapeMismatch(format!(
            "rest fitting needs >= 2 views, got {}",
            views.len()
        )));
    }
    let n_prims = init_field.primitives.len();
    let mut params = flatten(init_field);
    let mut adam = AdamState::new(params.len());
    let mut field = init_field.clone();
    let mut lr = hyper.learning_rate;
    let mut loss_curve = Vec::with_capacity(hyper.iterations + 1);
    let mut best: Option<(f64, Vec<f64>, ConvexField)> = None;

    for iter in 0..=hyper.iterations {
        // Evaluate loss and gradients at the current field.
        let mut loss = 0.0;
        let mut grad_acc: Option<FieldGradients> = None;
        for (camera, reference) in views {
            let rendered = render(&field, camera, reference.background);
            let (l, adj) = view_loss_and_adjoint(&rendered, reference, hyper.lambda_dssim)?;
            loss += l / views.len() as f64;
            let mut g = render_with_adjoint(&field, camera, reference.background, &adj);
            let scale = 1.0 / views.len() as f64;
            for prim in &mut g.points {
                for p in prim {
                    *p *= scale;
                }
            }
            for c in &mut g.colors {
                for v in c.iter_mut() {
                    *v *= scale;
                }
            }
            for o in &mut g.opacities {
                *o *= scale;
            }
            grad_acc = Some(match grad_acc {
                None => g,
                Some(acc) => add_grads(acc, g),
            });
        }
        let mut grads = grad_acc.unwrap();
        // Opacity sparsity penalty.
        if hyper.beta_opacity != 0.0 {
            let mean_op: f64 =
                field.primitives.iter().map(|p| p.opacity).sum::<f64>() / n_prims as f64;
            loss += hyper.beta_opacity * mean_op;
            for o in &mut grads.opacities {
                *o += hyper.beta_opacity / n_prims as f64;
            }
        }
        if !loss.is_finite() {
            return Err(SysIdError::NonFiniteLoss {
                iteration: iter,
                value: loss,
            });
        }
        loss_curve.push(loss);
        match &best {
            Some((b, _, _)) if *b <= loss => {
                if loss > b * 1.5 + 1e-12 {
                    lr = (lr * 0.5).max(hyper.learning_rate * 1e-6);
                }
            }
            _ => best = Some((loss, params.clone(), field.clone())),
        }
        if iter == hyper.iterations {
            break;
        }

        let flat = flatten_grads(&field, &grads);
        adam.step(&mut params, &flat, lr);
        match unflatten(&field, &params) {
            Ok(f) => field = f,
            Err(_) => {
                // Degenerate hull after the update: back off to the best state.
                let (_, bp, bf) = best.as_ref().unwrap();
                params = bp.clone();
                field = bf.clone();
                lr = (lr * 0.5).max(hyper.learning_rate * 1e-6);
            }
        }
    }

    let (_, _, best_field) = best.unwrap();
    Ok(FitRestResult {
        field: best_field,
        loss_curve,
    })
}

fn add_grads(mut a: FieldGradients, b: FieldGradients) -> FieldGradients {
    for (pa, pb) in a.points.iter_mut().zip(b.points) {
        for (x, y) in pa.iter_mut().zip(pb) {
            *x += y;
        }
    }
    for (ca, cb) in a.colors.iter_mut().zip(b.colors) {
        for c in 0..3 {
            ca[c] += cb[c];
        }
    }
    for (oa, ob) in a.opacities.iter_mut().zip(b.opacities) {
        *oa += ob;
    }
    a
}
