//! Perspective projection of primitive hull points.

use nalgebra::Vector3;

use super::{Camera, RenderError};
use crate::convex::ConvexPrimitive;

/// Image-plane footprint of one primitive.
#[derive(Debug, Clone)]
pub struct ProjectedPrimitive {
    /// Pixel coordinates of the hull points in front of the near plane,
    /// paired with the index of the source 3D point.
    pub points: Vec<(usize, [f64; 2])>,
    /// Camera-space depth of the primitive centroid (all points), for sorting.
    pub depth: f64,
}

/// Projects the hull points of `prim`. Points behind the near plane are
/// dropped; if none remain the primitive is skipped via `BehindCamera`.
pub fn project_primitive(
    prim: &ConvexPrimitive,
    camera: &Camera,
) -> Result<ProjectedPrimitive, RenderError> {
    project_points(&prim.points, camera)
}

pub fn project_points(
    points: &[Vector3<f64>],
    camera: &Camera,
) -> Result<ProjectedPrimitive, RenderError> {
    let mut projected = Vec::with_capacity(points.len());
    let mut centroid_z = 0.0;
    for (k, p) in points.iter().enumerate() {
        let cam = camera.to_camera(p);
        centroid_z += cam.z;
        if cam.z >= camera.near {
            let u = camera.width as f64 / 2.0 + camera.focal * cam.x / cam.z;
            let v = camera.height as f64 / 2.0 + camera.focal * cam.y / cam.z;
            projected.push((k, [u, v]));
        }
    }
    if projected.is_empty() {
        return Err(RenderError::BehindCamera {
            points: points.len(),
        });
    }
    Ok(ProjectedPrimitive {
        points: projected,
        depth: centroid_z / points.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn front_camera(focal: f64) -> Camera {
        Camera::new(
            Vector3::new(0.0, 0.0, -2.0),
            Matrix3::identity(),
            focal,
            64,
            64,
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn optical_axis_projects_to_center() {
        let cam = front_camera(50.0);
        let p = project_points(&[Vector3::new(0.0, 0.0, 1.0); 4], &cam).unwrap();
        for (_, uv) in &p.points {
            assert!((uv[0] - 32.0).abs() < 1e-12);
            assert!((uv[1] - 32.0).abs() < 1e-12);
        }
        assert!((p.depth - 3.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_focal_doubles_offsets() {
        let cam1 = front_camera(40.0);
        let cam2 = front_camera(80.0);
        let pts = [Vector3::new(0.3, -0.2, 0.5)];
        let p1 = project_points(&pts, &cam1).unwrap().points[0].1;
        let p2 = project_points(&pts, &cam2).unwrap().points[0].1;
        assert!(((p2[0] - 32.0) - 2.0 * (p1[0] - 32.0)).abs() < 1e-10);
        assert!(((p2[1] - 32.0) - 2.0 * (p1[1] - 32.0)).abs() < 1e-10);
    }

    #[test]
    fn projection_matches_by_hand_oracle() {
        let cam = Camera::look_at(
            Vector3::new(0.4, 0.8, 1.9),
            Vector3::new(0.0, 0.1, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            72.0,
            48,
            36,
            0.05,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let p = Vector3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            );
            let out = project_points(&[p], &cam).unwrap().points[0].1;
            // Independent expansion of the same pinhole model.
            let rel = p - cam.position;
            let xc = cam.rotation.row(0).transpose().dot(&rel);
            let yc = cam.rotation.row(1).transpose().dot(&rel);
            let zc = cam.rotation.row(2).transpose().dot(&rel);
            assert!(zc >= cam.near);
            let u = 48.0 / 2.0 + 72.0 * xc / zc;
            let v = 36.0 / 2.0 + 72.0 * yc / zc;
            assert!((out[0] - u).abs() < 1e-9);
            assert!((out[1] - v).abs() < 1e-9);
        }
    }

    #[test]
    fn all_points_behind_is_an_error() {
        let cam = front_camera(50.0);
        let behind = [Vector3::new(0.0, 0.0, -5.0); 4];
        assert!(matches!(
            project_points(&behind, &cam),
            Err(RenderError::BehindCamera { .. })
        ));
    }
}
