//! Incremental convex hull in 3D with plane extraction.
//!
//! The hull is consumed as a set of face planes (outward unit normal, offset),
//! not as a triangle mesh: coplanar triangles are merged and each plane offset
//! is re-fit against the full input so that every point satisfies
//! `n.x + d <= eps_hull`.

use nalgebra::{Matrix3, Vector3};

use super::{ConvexError, Plane};

/// Angular tolerance (radians) below which adjacent face normals are merged.
pub const FACE_MERGE_ANGLE: f64 = 1e-6;

/// Rank test threshold: points are degenerate when sigma_min/sigma_max < this.
pub const DEGENERACY_RATIO: f64 = 1e-8;

/// Containment slack per unit of bounding-box diagonal.
pub const HULL_EPS_PER_DIAG: f64 = 1e-7;

#[derive(Clone, Copy)]
struct Face {
    verts: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
    alive: bool,
}

fn bbox_diag(points: &[Vector3<f64>]) -> f64 {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// Rank of the centered point cloud via singular values of the covariance factor.
fn centered_rank(points: &[Vector3<f64>]) -> usize {
    let n = points.len() as f64;
    let mean: Vector3<f64> = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let svd = cov.symmetric_eigen();
    let max = svd.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return 0;
    }
    // Covariance eigenvalues are squared singular values of the point matrix.
    svd.eigenvalues
        .iter()
        .filter(|&&e| (e.max(0.0) / max).sqrt() >= DEGENERACY_RATIO)
        .count()
}

fn face_plane(a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) -> Option<(Vector3<f64>, f64)> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len == 0.0 {
        return None;
    }
    let n = n / len;
    Some((n, -n.dot(&a)))
}

/// Computes the outward-oriented face planes of the convex hull of `points`.
///
/// Coplanar faces are merged (angular tolerance [`FACE_MERGE_ANGLE`]) and the
/// returned offsets are tightened so all input points lie on or inside every
/// plane. Errors with [`ConvexError::DegenerateHull`] when the centered points
/// have rank < 3.
pub fn compute_hull(points: &[Vector3<f64>]) -> Result<Vec<Plane>, ConvexError> {
    if points.len() < 4 || centered_rank(points) < 3 {
        return Err(ConvexError::DegenerateHull {
            points: points.len(),
        });
    }
    let diag = bbox_diag(points);
    let vis_eps = 1e-12_f64.max(1e-10 * diag);

    let seed = initial_simplex(points, vis_eps).ok_or(ConvexError::DegenerateHull {
        points: points.len(),
    })?;

    let interior: Vector3<f64> = seed.iter().map(|&i| points[i]).sum::<Vector3<f64>>() / 4.0;

    let mut faces: Vec<Face> = Vec::new();
    let tetra_faces = [
        [seed[0], seed[1], seed[2]],
        [seed[0], seed[1], seed[3]],
        [seed[0], seed[2], seed[3]],
        [seed[1], seed[2], seed[3]],
    ];
    for verts in tetra_faces {
        let (mut n, mut d) =
            face_plane(points[verts[0]], points[verts[1]], points[verts[2]]).unwrap();
        if n.dot(&interior) + d > 0.0 {
            n = -n;
            d = -d;
        }
        faces.push(Face {
            verts,
            normal: n,
            offset: d,
            alive: true,
        });
    }

    // Insert remaining points in index order; points inside the current hull
    // are skipped (they carry through advection but contribute no planes).
    for (idx, p) in points.iter().enumerate() {
        if seed.contains(&idx) {
            continue;
        }
        let visible: Vec<usize> = faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.alive && f.normal.dot(p) + f.offset > vis_eps)
            .map(|(i, _)| i)
            .collect();
        if visible.is_empty() {
            continue;
        }
        // Horizon = edges shared by exactly one visible face.
        let mut edge_count: Vec<((usize, usize), (usize, usize))> = Vec::new();
        for &fi in &visible {
            let v = faces[fi].verts;
            for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                let key = (a.min(b), a.max(b));
                if let Some(e) = edge_count.iter_mut().find(|(k, _)| *k == key) {
                    e.1 .1 += 1;
                } else {
                    edge_count.push((key, (a, 1)));
                }
            }
        }
        for &fi in &visible {
            faces[fi].alive = false;
        }
        for ((a, b), (_, count)) in edge_count {
            if count != 1 {
                continue;
            }
            if let Some((mut n, mut d)) = face_plane(points[a], points[b], *p) {
                if n.dot(&interior) + d > 0.0 {
                    n = -n;
                    d = -d;
                }
                faces.push(Face {
                    verts: [a, b, idx],
                    normal: n,
                    offset: d,
                    alive: true,
                });
            }
        }
    }

    Ok(merge_faces(points, &faces, diag))
}

/// Picks four affinely independent extreme points to seed the hull.
fn initial_simplex(points: &[Vector3<f64>], eps: f64) -> Option<[usize; 4]> {
    // Extreme pair along the axis of largest spread.
    let mut best = (0usize, 1usize, 0.0f64);
    for axis in 0..3 {
        let (mut lo, mut hi) = (0usize, 0usize);
        for (i, p) in points.iter().enumerate() {
            if p[axis] < points[lo][axis] {
                lo = i;
            }
            if p[axis] > points[hi][axis] {
                hi = i;
            }
        }
        let spread = points[hi][axis] - points[lo][axis];
        if spread > best.2 {
            best = (lo, hi, spread);
        }
    }
    let (i0, i1, _) = best;
    if i0 == i1 {
        return None;
    }
    let dir = (points[i1] - points[i0]).normalize();
    // Farthest from the line.
    let (mut i2, mut d2) = (usize::MAX, eps);
    for (i, p) in points.iter().enumerate() {
        let v = p - points[i0];
        let dist = (v - dir * v.dot(&dir)).norm();
        if dist > d2 {
            i2 = i;
            d2 = dist;
        }
    }
    if i2 == usize::MAX {
        return None;
    }
    // Farthest from the plane.
    let (n, d) = face_plane(points[i0], points[i1], points[i2])?;
    let (mut i3, mut d3) = (usize::MAX, eps);
    for (i, p) in points.iter().enumerate() {
        let dist = (n.dot(p) + d).abs();
        if dist > d3 {
            i3 = i;
            d3 = dist;
        }
    }
    if i3 == usize::MAX {
        return None;
    }
    Some([i0, i1, i2, i3])
}

/// Clusters near-parallel faces and refits offsets against all points.
fn merge_faces(points: &[Vector3<f64>], faces: &[Face], diag: f64) -> Vec<Plane> {
    struct Cluster {
        normal_sum: Vector3<f64>,
        rep_normal: Vector3<f64>,
        rep_offset: f64,
    }
    let offset_tol = 1e-6 * diag.max(1e-12);
    let mut clusters: Vec<Cluster> = Vec::new();
    for f in faces.iter().filter(|f| f.alive) {
        let hit = clusters.iter_mut().find(|c| {
            c.rep_normal.cross(&f.normal).norm() < FACE_MERGE_ANGLE
                && c.rep_normal.dot(&f.normal) > 0.0
                && (c.rep_offset - f.offset).abs() < offset_tol
        });
        match hit {
            Some(c) => c.normal_sum += f.normal,
            None => clusters.push(Cluster {
                normal_sum: f.normal,
                rep_normal: f.normal,
                rep_offset: f.offset,
            }),
        }
    }
    clusters
        .into_iter()
        .map(|c| {
            let n = c.normal_sum.normalize();
            // Offset from the supporting points: guarantees containment.
            let d = -points.iter().map(|p| n.dot(p)).fold(f64::NEG_INFINITY, f64::max);
            Plane { normal: n, offset: d }
        })
        .collect()
}

/// 2D convex hull (Andrew's monotone chain), counter-clockwise order.
///
/// Returns indices into `pts`. Fewer than 3 output vertices means the input is
/// degenerate (collinear).
pub fn hull_2d(pts: &[[f64; 2]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| {
        pts[a][0]
            .partial_cmp(&pts[b][0])
            .unwrap()
            .then(pts[a][1].partial_cmp(&pts[b][1]).unwrap())
    });
    idx.dedup_by(|a, b| pts[*a] == pts[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let cross = |o: usize, a: usize, b: usize| -> f64 {
        (pts[a][0] - pts[o][0]) * (pts[b][1] - pts[o][1])
            - (pts[a][1] - pts[o][1]) * (pts[b][0] - pts[o][0])
    };
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], i) <= 0.0 {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], i) <= 0.0 {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> Vec<Vector3<f64>> {
        let mut v = Vec::new();
        for x in [-0.5, 0.5] {
            for y in [-0.5, 0.5] {
                for z in [-0.5, 0.5] {
                    v.push(Vector3::new(x, y, z));
                }
            }
        }
        v
    }

    #[test]
    fn tetrahedron_has_four_planes() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ];
        let planes = compute_hull(&pts).unwrap();
        assert_eq!(planes.len(), 4);
    }

    #[test]
    fn coplanar_points_are_degenerate() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
        ];
        assert!(matches!(
            compute_hull(&pts),
            Err(ConvexError::DegenerateHull { .. })
        ));
    }

    #[test]
    fn cube_merges_to_six_axis_planes() {
        let planes = compute_hull(&unit_cube()).unwrap();
        assert_eq!(planes.len(), 6);
        for p in &planes {
            // Axis-aligned: exactly one component of magnitude ~1.
            let comps: Vec<f64> = p.normal.iter().map(|c| c.abs()).collect();
            let big = comps.iter().filter(|&&c| c > 0.9).count();
            assert_eq!(big, 1, "normal {:?} not axis aligned", p.normal);
            assert!((p.offset.abs() - 0.5).abs() < 1e-12, "offset {}", p.offset);
        }
        // Brute force: every point on/inside every plane, each plane supports >= 3.
        let pts = unit_cube();
        let diag = 3.0_f64.sqrt();
        for p in &planes {
            let mut support = 0;
            for x in &pts {
                let f = p.normal.dot(x) + p.offset;
                assert!(f <= HULL_EPS_PER_DIAG * diag);
                if f.abs() <= HULL_EPS_PER_DIAG * diag {
                    support += 1;
                }
            }
            assert!(support >= 3);
        }
    }

    #[test]
    fn interior_points_do_not_add_planes() {
        let mut pts = unit_cube();
        pts.push(Vector3::new(0.1, 0.0, -0.05));
        let planes = compute_hull(&pts).unwrap();
        assert_eq!(planes.len(), 6);
    }

    #[test]
    fn hull_2d_square() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let h = hull_2d(&pts);
        assert_eq!(h.len(), 4);
        assert!(!h.contains(&4));
    }

    #[test]
    fn hull_2d_collinear_is_degenerate() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        assert!(hull_2d(&pts).len() < 3);
    }
}
