//! Procedural rest geometry. Shapes stand in for scanned meshes: a box is one
//! primitive, a blocky object is a grid of abutting boxes, a
//! sphere-of-convexes is a ball tiled by K-point polyhedral chunks, torus
//! segments are wedge prisms around a ring.

use nalgebra::Vector3;

use convexdyn_core::convex::{ConvexField, ConvexPrimitive};

use crate::config::{ConfigError, SceneConfig, ShapeKind};

/// Deterministic per-index jitter in [-1, 1], cheap integer hash.
fn hash_unit(a: u64, b: u64) -> f64 {
    let mut x = a
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(b)
        .wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 31;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 29;
    (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn box_points(center: Vector3<f64>, half: Vector3<f64>) -> Vec<Vector3<f64>> {
    let mut pts = Vec::with_capacity(8);
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                pts.push(center + Vector3::new(sx * half.x, sy * half.y, sz * half.z));
            }
        }
    }
    pts
}

/// K points roughly uniform on a sphere (Fibonacci lattice) with a small
/// deterministic jitter so faces never merge as coplanar.
fn fibonacci_ball(center: Vector3<f64>, radius: f64, k: usize, salt: u64) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..k)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / k as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let th = golden * i as f64;
            let jitter = 1.0 + 0.04 * hash_unit(salt, i as u64);
            center
                + radius
                    * jitter
                    * Vector3::new(r * th.cos(), y, r * th.sin())
        })
        .collect()
}

/// Slight per-primitive color variation so multi-primitive motion reads in
/// rendered frames.
fn shade(base: [f64; 3], index: usize) -> [f64; 3] {
    let t = 0.12 * hash_unit(0xc017, index as u64);
    [
        (base[0] + t).clamp(0.0, 1.0),
        (base[1] + 0.5 * t).clamp(0.0, 1.0),
        (base[2] - t).clamp(0.0, 1.0),
    ]
}

/// Builds the rest field described by the config's shape section.
pub fn build_rest_field(cfg: &SceneConfig) -> Result<ConvexField, ConfigError> {
    let s = &cfg.shape;
    let center = Vector3::from(s.center);
    let k = cfg.sim.points_per_convex;
    let mk = |points: Vec<Vector3<f64>>, index: usize| {
        ConvexPrimitive::new(points, shade(s.color, index), s.opacity, s.alpha, s.beta)
            .map_err(|e| ConfigError::Invalid(format!("shape primitive {index}: {e}")))
    };

    let mut prims = Vec::new();
    match s.kind {
        ShapeKind::Box => {
            let half = s
                .half_extents
                .ok_or_else(|| ConfigError::Invalid("box shape needs half_extents".into()))?;
            prims.push(mk(box_points(center, Vector3::from(half)), 0)?);
        }
        ShapeKind::BlockyGrid => {
            let cell = s
                .cell
                .ok_or_else(|| ConfigError::Invalid("blocky_grid needs cell".into()))?;
            let grid = s
                .grid
                .ok_or_else(|| ConfigError::Invalid("blocky_grid needs grid".into()))?;
            let half = Vector3::repeat(cell / 2.0);
            let offset = Vector3::new(
                cell * (grid[0] as f64 - 1.0) / 2.0,
                cell * (grid[1] as f64 - 1.0) / 2.0,
                cell * (grid[2] as f64 - 1.0) / 2.0,
            );
            let mut index = 0;
            for ix in 0..grid[0] {
                for iy in 0..grid[1] {
                    for iz in 0..grid[2] {
                        let c = center - offset
                            + cell * Vector3::new(ix as f64, iy as f64, iz as f64);
                        prims.push(mk(box_points(c, half), index)?);
                        index += 1;
                    }
                }
            }
        }
        ShapeKind::SphereOfConvexes => {
            let radius = s
                .radius
                .ok_or_else(|| ConfigError::Invalid("sphere_of_convexes needs radius".into()))?;
            let count = s
                .count
                .ok_or_else(|| ConfigError::Invalid("sphere_of_convexes needs count".into()))?;
            if count == 0 {
                return Err(ConfigError::Invalid("count must be >= 1".into()));
            }
            // One chunk at the center, the rest on a Fibonacci shell; chunk
            // radius slightly above the shell spacing for gap-free coverage.
            let chunk_r = if count == 1 {
                radius
            } else {
                radius * (0.55 + 0.8 / count as f64)
            };
            let shell = radius - chunk_r * 0.8;
            let centers: Vec<Vector3<f64>> = if count == 1 {
                vec![center]
            } else {
                let mut c = vec![center];
                let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
                for i in 0..count - 1 {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / (count - 1) as f64;
                    let r = (1.0 - y * y).max(0.0).sqrt();
                    let th = golden * i as f64;
                    c.push(center + shell * Vector3::new(r * th.cos(), y, r * th.sin()));
                }
                c
            };
            for (i, c) in centers.into_iter().enumerate() {
                prims.push(mk(fibonacci_ball(c, chunk_r, k, i as u64 + 1), i)?);
            }
        }
        ShapeKind::TorusSegments => {
            let major = s
                .major_radius
                .ok_or_else(|| ConfigError::Invalid("torus_segments needs major_radius".into()))?;
            let minor = s
                .minor_radius
                .ok_or_else(|| ConfigError::Invalid("torus_segments needs minor_radius".into()))?;
            let segments = s
                .segments
                .ok_or_else(|| ConfigError::Invalid("torus_segments needs segments".into()))?;
            if segments < 3 {
                return Err(ConfigError::Invalid("segments must be >= 3".into()));
            }
            let tau = std::f64::consts::TAU;
            for i in 0..segments {
                let a0 = tau * i as f64 / segments as f64;
                let a1 = tau * (i + 1) as f64 / segments as f64;
                let mut pts = Vec::with_capacity(8);
                for a in [a0, a1] {
                    let dir = Vector3::new(a.cos(), 0.0, a.sin());
                    for rr in [major - minor, major + minor] {
                        for y in [-minor, minor] {
                            pts.push(center + rr * dir + Vector3::new(0.0, y, 0.0));
                        }
                    }
                }
                prims.push(mk(pts, i)?);
            }
        }
        ShapeKind::Points => {
            let lists = s
                .points
                .as_ref()
                .ok_or_else(|| ConfigError::Invalid("points shape needs points lists".into()))?;
            for (i, list) in lists.iter().enumerate() {
                let pts = list.iter().map(|p| center + Vector3::from(*p)).collect();
                prims.push(mk(pts, i)?);
            }
        }
    }
    let field = ConvexField::from_rest(prims);
    field
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(field)
}
