//! Forward rasterization: 2D hull edge planes, the log-sum-exp occupancy in
//! the image plane, and front-to-back alpha blending.

use rayon::prelude::*;

use super::project::{project_primitive, ProjectedPrimitive};
use super::{Camera, Image, RenderError};
use crate::convex::{hull_2d, open_unit, sigmoid, ConvexField};

/// One 2D hull edge as a half-plane `n.q + d = 0`, outward unit normal,
/// in pixel units. `a`/`b` index the projected-point list.
#[derive(Debug, Clone, Copy)]
pub struct EdgePlane {
    pub normal: [f64; 2],
    pub offset: f64,
    pub a: usize,
    pub b: usize,
}

/// A primitive prepared for per-pixel evaluation.
#[derive(Debug, Clone)]
pub struct Projected2d {
    pub projection: ProjectedPrimitive,
    pub edges: Vec<EdgePlane>,
    pub alpha: f64,
    pub beta: f64,
    pub color: [f64; 3],
    pub opacity: f64,
    /// Index of the source primitive in the field.
    pub prim_index: usize,
}

/// Builds outward edge half-planes from projected points (their convex hull).
pub fn edge_planes(points: &[(usize, [f64; 2])]) -> Result<Vec<EdgePlane>, RenderError> {
    let uv: Vec<[f64; 2]> = points.iter().map(|(_, p)| *p).collect();
    let hull = hull_2d(&uv);
    if hull.len() < 3 {
        return Err(RenderError::DegenerateProjection {
            hull_size: hull.len(),
        });
    }
    let k = hull.len();
    let cx = hull.iter().map(|&i| uv[i][0]).sum::<f64>() / k as f64;
    let cy = hull.iter().map(|&i| uv[i][1]).sum::<f64>() / k as f64;
    let mut edges = Vec::with_capacity(k);
    for e in 0..k {
        let ia = hull[e];
        let ib = hull[(e + 1) % k];
        let (pa, pb) = (uv[ia], uv[ib]);
        let ux = pb[0] - pa[0];
        let uy = pb[1] - pa[1];
        let len = (ux * ux + uy * uy).sqrt();
        if len == 0.0 {
            continue;
        }
        let mut n = [uy / len, -ux / len];
        let mut d = -(n[0] * pa[0] + n[1] * pa[1]);
        if n[0] * cx + n[1] * cy + d > 0.0 {
            n = [-n[0], -n[1]];
            d = -d;
        }
        edges.push(EdgePlane {
            normal: n,
            offset: d,
            a: ia,
            b: ib,
        });
    }
    if edges.len() < 3 {
        return Err(RenderError::DegenerateProjection {
            hull_size: edges.len(),
        });
    }
    Ok(edges)
}

/// Smooth 2D occupancy at pixel `q`: the same sigmoid log-sum-exp as the 3D
/// occupancy, applied to edge half-planes, with pixel distances scaled by
/// `1/focal` so alpha and beta keep their 3D-scale meaning across resolutions.
pub fn occupancy_2d(
    points: &[(usize, [f64; 2])],
    q: [f64; 2],
    alpha: f64,
    beta: f64,
    focal: f64,
) -> Result<f64, RenderError> {
    let edges = edge_planes(points)?;
    Ok(occupancy_from_edges(&edges, q, alpha, beta, focal))
}

pub(super) fn occupancy_from_edges(
    edges: &[EdgePlane],
    q: [f64; 2],
    alpha: f64,
    beta: f64,
    focal: f64,
) -> f64 {
    open_unit(sigmoid(-beta * smooth_sdf_2d(edges, q, alpha, focal)))
}

pub(super) fn smooth_sdf_2d(edges: &[EdgePlane], q: [f64; 2], alpha: f64, focal: f64) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for e in edges {
        let f = (e.normal[0] * q[0] + e.normal[1] * q[1] + e.offset) / focal;
        max = max.max(alpha * f);
    }
    let mut sum = 0.0;
    for e in edges {
        let f = (e.normal[0] * q[0] + e.normal[1] * q[1] + e.offset) / focal;
        sum += (alpha * f - max).exp();
    }
    max + sum.ln()
}

/// Projects and prepares all primitives, sorted front to back by centroid
/// depth (ties by primitive index). Primitives behind the camera or with
/// degenerate projections are skipped.
pub(super) fn prepare(field: &ConvexField, camera: &Camera) -> Vec<Projected2d> {
    let mut prepared: Vec<Projected2d> = field
        .primitives
        .iter()
        .enumerate()
        .filter_map(|(i, prim)| {
            let projection = project_primitive(prim, camera).ok()?;
            let edges = edge_planes(&projection.points).ok()?;
            Some(Projected2d {
                projection,
                edges,
                alpha: prim.smoothness,
                beta: prim.sharpness,
                color: prim.color,
                opacity: prim.opacity,
                prim_index: i,
            })
        })
        .collect();
    prepared.sort_by(|a, b| {
        a.projection
            .depth
            .partial_cmp(&b.projection.depth)
            .unwrap()
            .then(a.prim_index.cmp(&b.prim_index))
    });
    prepared
}

/// Renders the field: per pixel, front-to-back blending
/// `C = sum_i c_i s_i O_i prod_{j<i} (1 - s_j O_j)` plus the background times
/// the remaining transmittance. Pixels are sampled at their centers.
pub fn render(field: &ConvexField, camera: &Camera, background: [f64; 3]) -> Image {
    let prepared = prepare(field, camera);
    let width = camera.width;
    let height = camera.height;
    let focal = camera.focal;
    let mut image = Image::solid(width, height, background);
    image
        .pixels
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, px) in row.iter_mut().enumerate() {
                let q = [x as f64 + 0.5, y as f64 + 0.5];
                let mut color = [0.0; 3];
                let mut transmittance = 1.0;
                for p in &prepared {
                    let occ = occupancy_from_edges(&p.edges, q, p.alpha, p.beta, focal);
                    let a = p.opacity * occ;
                    for c in 0..3 {
                        color[c] += p.color[c] * a * transmittance;
                    }
                    transmittance *= 1.0 - a;
                }
                for c in 0..3 {
                    px[c] = (color[c] + background[c] * transmittance).clamp(0.0, 1.0);
                }
            }
        });
    image
}
