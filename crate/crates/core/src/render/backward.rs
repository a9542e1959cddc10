//! Reverse-mode differentiation of the splatting formula.
//!
//! Given per-pixel adjoints dL/dC, accumulates dL/d{hull points, colors,
//! opacities} analytically through the blending product, the sigmoid
//! log-sum-exp occupancy, the edge half-planes, and the perspective
//! projection. The 2D hull's edge combinatorics are held fixed, so the result
//! is a subgradient at combinatorial switches.

use nalgebra::Vector3;

use super::raster::{prepare, smooth_sdf_2d, Projected2d};
use super::{Camera, Image, RenderError};
use crate::convex::{open_unit, sigmoid, ConvexField};
use crate::parallel::chunked_sum;

/// Gradients with the same shape as the differentiable field parameters.
#[derive(Debug, Clone)]
pub struct FieldGradients {
    pub points: Vec<Vec<Vector3<f64>>>,
    pub colors: Vec<[f64; 3]>,
    pub opacities: Vec<f64>,
}

impl FieldGradients {
    fn zeros(field: &ConvexField) -> Self {
        Self {
            points: field
                .primitives
                .iter()
                .map(|p| vec![Vector3::zeros(); p.points.len()])
                .collect(),
            colors: vec![[0.0; 3]; field.primitives.len()],
            opacities: vec![0.0; field.primitives.len()],
        }
    }

    fn add(mut self, other: Self) -> Self {
        for (a, b) in self.points.iter_mut().zip(other.points) {
            for (pa, pb) in a.iter_mut().zip(b) {
                *pa += pb;
            }
        }
        for (a, b) in self.colors.iter_mut().zip(other.colors) {
            for c in 0..3 {
                a[c] += b[c];
            }
        }
        for (a, b) in self.opacities.iter_mut().zip(other.opacities) {
            *a += b;
        }
        self
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0_f64;
        for prim in &self.points {
            for p in prim {
                m = m.max(p.amax());
            }
        }
        for c in &self.colors {
            for &v in c {
                m = m.max(v.abs());
            }
        }
        for &o in &self.opacities {
            m = m.max(o.abs());
        }
        m
    }
}

/// Backpropagates an adjoint image `d_pixels` (dL/dC per pixel, row-major)
/// through the renderer.
pub fn render_with_adjoint(
    field: &ConvexField,
    camera: &Camera,
    background: [f64; 3],
    d_pixels: &[[f64; 3]],
) -> FieldGradients {
    let prepared = prepare(field, camera);
    let width = camera.width;
    let height = camera.height;
    assert_eq!(d_pixels.len(), width * height);

    let grads = chunked_sum(
        height,
        |rows| {
            let mut acc = FieldGradients::zeros(field);
            for y in rows {
                for x in 0..width {
                    let adj = d_pixels[y * width + x];
                    if adj == [0.0; 3] {
                        continue;
                    }
                    backward_pixel(
                        &prepared,
                        camera,
                        background,
                        [x as f64 + 0.5, y as f64 + 0.5],
                        adj,
                        field,
                        &mut acc,
                    );
                }
            }
            acc
        },
        FieldGradients::zeros(field),
        FieldGradients::add,
    );
    grads
}

/// Renders and differentiates the summed pixel L2 loss against `target`.
/// Returns (loss, rendered image, gradients).
pub fn render_gradients(
    field: &ConvexField,
    camera: &Camera,
    target: &Image,
) -> Result<(f64, Image, FieldGradients), RenderError> {
    let rendered = super::raster::render(field, camera, target.background);
    rendered.same_shape(target)?;
    let mut loss = 0.0;
    let mut adj = vec![[0.0; 3]; rendered.pixels.len()];
    for (i, (r, t)) in rendered.pixels.iter().zip(&target.pixels).enumerate() {
        for c in 0..3 {
            let d = r[c] - t[c];
            loss += d * d;
            adj[i][c] = 2.0 * d;
        }
    }
    let grads = render_with_adjoint(field, camera, target.background, &adj);
    Ok((loss, rendered, grads))
}

#[allow(clippy::too_many_arguments)]
fn backward_pixel(
    prepared: &[Projected2d],
    camera: &Camera,
    background: [f64; 3],
    q: [f64; 2],
    adj: [f64; 3],
    field: &ConvexField,
    acc: &mut FieldGradients,
) {
    let n = prepared.len();
    if n == 0 {
        return;
    }
    let focal = camera.focal;

    // Forward sweep: occupancies, alphas, prefix transmittances.
    let mut occ = vec![0.0; n];
    let mut a = vec![0.0; n];
    let mut t_pre = vec![1.0; n];
    let mut t = 1.0;
    for (i, p) in prepared.iter().enumerate() {
        let phi = smooth_sdf_2d(&p.edges, q, p.alpha, focal);
        let o = open_unit(sigmoid(-p.beta * phi));
        occ[i] = o;
        a[i] = p.opacity * o;
        t_pre[i] = t;
        t *= 1.0 - a[i];
    }

    // Backward sweep: U_i = color composited behind primitive i.
    let mut u = [background[0], background[1], background[2]];
    for i in (0..n).rev() {
        let p = &prepared[i];
        let ti = t_pre[i];

        // dL/dc_i and the scalar dL/da_i.
        let mut s_i = 0.0;
        for c in 0..3 {
            acc.colors[p.prim_index][c] += adj[c] * a[i] * ti;
            s_i += adj[c] * (p.color[c] - u[c]) * ti;
        }
        acc.opacities[p.prim_index] += s_i * occ[i];

        // Through the sigmoid: dL/dphi.
        let d_phi = s_i * p.opacity * (-p.beta * occ[i] * (1.0 - occ[i]));
        if d_phi != 0.0 {
            backward_occupancy(p, q, focal, d_phi, camera, field, acc);
        }

        // Maintain U for the next (nearer) primitive.
        for c in 0..3 {
            u[c] = p.color[c] * a[i] + (1.0 - a[i]) * u[c];
        }
    }
}

/// dL/dphi -> gradients of the projected hull endpoints -> 3D hull points.
fn backward_occupancy(
    p: &Projected2d,
    q: [f64; 2],
    focal: f64,
    d_phi: f64,
    camera: &Camera,
    field: &ConvexField,
    acc: &mut FieldGradients,
) {
    // Softmax over alpha * f_e with max subtraction.
    let fe: Vec<f64> = p
        .edges
        .iter()
        .map(|e| (e.normal[0] * q[0] + e.normal[1] * q[1] + e.offset) / focal)
        .collect();
    let max = fe.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(p.alpha * v));
    let mut denom = 0.0;
    let mut weights = vec![0.0; fe.len()];
    for (k, &f) in fe.iter().enumerate() {
        let w = (p.alpha * f - max).exp();
        weights[k] = w;
        denom += w;
    }

    for (k, edge) in p.edges.iter().enumerate() {
        // dL/df_e
        let d_f = d_phi * p.alpha * weights[k] / denom;
        if d_f == 0.0 {
            continue;
        }
        let pa = p.projection.points[edge.a].1;
        let pb = p.projection.points[edge.b].1;
        let ux = pb[0] - pa[0];
        let uy = pb[1] - pa[1];
        let len = (ux * ux + uy * uy).sqrt();
        if len == 0.0 {
            continue;
        }
        // Recover the orientation sign relative to the raw perp (uy, -ux)/len.
        let raw = [uy / len, -ux / len];
        let sign = if (raw[0] * edge.normal[0] + raw[1] * edge.normal[1]) > 0.0 {
            1.0
        } else {
            -1.0
        };
        // g = s * A / L, A = m . (q - pa), m = (uy, -ux); f_e = g / focal.
        let rx = q[0] - pa[0];
        let ry = q[1] - pa[1];
        let a_val = uy * rx - ux * ry;
        let tx = ux / len;
        let ty = uy / len;
        // dA/dpa and dA/dpb (including the dependence of u on both).
        let da_pa = [-uy + ry, -rx + ux];
        let da_pb = [-ry, rx];
        let scale = sign * d_f / (focal * len);
        let g_pa = [
            scale * (da_pa[0] + a_val * tx / len),
            scale * (da_pa[1] + a_val * ty / len),
        ];
        let g_pb = [
            scale * (da_pb[0] - a_val * tx / len),
            scale * (da_pb[1] - a_val * ty / len),
        ];
        backward_projection(p, edge.a, g_pa, camera, field, acc);
        backward_projection(p, edge.b, g_pb, camera, field, acc);
    }
}

/// Pixel-coordinate gradient of one projected point -> world-space gradient.
fn backward_projection(
    p: &Projected2d,
    proj_idx: usize,
    g2d: [f64; 2],
    camera: &Camera,
    field: &ConvexField,
    acc: &mut FieldGradients,
) {
    let (point_idx, _) = p.projection.points[proj_idx];
    let world = field.primitives[p.prim_index].points[point_idx];
    let cam = camera.to_camera(&world);
    let f = camera.focal;
    let z = cam.z;
    // Rows of d(uv)/d(cam): [f/z, 0, -f x/z^2], [0, f/z, -f y/z^2].
    let row_u = [f / z, 0.0, -f * cam.x / (z * z)];
    let row_v = [0.0, f / z, -f * cam.y / (z * z)];
    let mut g_cam = Vector3::zeros();
    for i in 0..3 {
        g_cam[i] = g2d[0] * row_u[i] + g2d[1] * row_v[i];
    }
    // cam = R (x - pos) so d/dx = R^T on the left of the adjoint.
    let g_world = camera.rotation.transpose() * g_cam;
    acc.points[p.prim_index][point_idx] += g_world;
}
