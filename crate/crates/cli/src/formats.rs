//! On-disk formats: little-endian binary files for trajectories, skinning
//! parameters, and fitted fields, plus line-delimited JSON records.
//!
//! Every binary file starts with an 8-byte magic and a u32 schema version;
//! readers reject unknown versions.

use std::io::{self, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use convexdyn_core::convex::{ConvexField, ConvexPrimitive};
use convexdyn_core::render::Camera;
use convexdyn_core::skinning::{DomainBox, SkinningField};

pub const TRAJ_MAGIC: &[u8; 8] = b"CVXDTRAJ";
pub const SKIN_MAGIC: &[u8; 8] = b"CVXDSKIN";
pub const FIELD_MAGIC: &[u8; 8] = b"CVXDFLD\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("file io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },
    #[error("unknown format version {found} (reader supports {supported})")]
    UnknownVersion { found: u32, supported: u32 },
    #[error("corrupt file: {0}")]
    Corrupt(String),
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn check_header<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<(), FormatError> {
    let mut found = [0u8; 8];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&found).into_owned(),
        });
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnknownVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(())
}

/// In-memory trajectory payload: reduced DOFs plus advected point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    pub handles: usize,
    pub dt: f64,
    /// Per frame: the flat z vector.
    pub z: Vec<Vec<f64>>,
    /// Per frame, per primitive: the advected points.
    pub points: Vec<Vec<Vec<[f64; 3]>>>,
}

impl TrajectoryData {
    pub fn from_sim(traj: &convexdyn_core::sim::Trajectory, handles: usize) -> Self {
        Self {
            handles,
            dt: traj.dt,
            z: traj
                .frames
                .iter()
                .map(|f| f.state.z.iter().cloned().collect())
                .collect(),
            points: traj
                .frames
                .iter()
                .map(|f| {
                    f.field
                        .primitives
                        .iter()
                        .map(|p| p.points.iter().map(|v| [v.x, v.y, v.z]).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn frame_count(&self) -> usize {
        self.z.len()
    }

    /// Reconstructs the advected field of one frame, reusing the rest field's
    /// attributes (color, opacity, smoothness, sharpness are time-invariant).
    pub fn field_at(
        &self,
        frame: usize,
        rest: &ConvexField,
    ) -> Result<ConvexField, FormatError> {
        let pts = self
            .points
            .get(frame)
            .ok_or_else(|| FormatError::Corrupt(format!("frame {frame} out of range")))?;
        if pts.len() != rest.rest_primitives.len() {
            return Err(FormatError::Corrupt(format!(
                "frame {frame}: {} primitives vs rest {}",
                pts.len(),
                rest.rest_primitives.len()
            )));
        }
        let primitives = rest
            .rest_primitives
            .iter()
            .zip(pts)
            .map(|(r, p)| {
                ConvexPrimitive::new(
                    p.iter().map(|q| Vector3::from(*q)).collect(),
                    r.color,
                    r.opacity,
                    r.smoothness,
                    r.sharpness,
                )
                .map_err(|e| FormatError::Corrupt(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConvexField {
            primitives,
            rest_primitives: rest.rest_primitives.clone(),
        })
    }
}

pub fn write_trajectory<W: Write>(data: &TrajectoryData, mut w: W) -> Result<(), FormatError> {
    w.write_all(TRAJ_MAGIC)?;
    write_u32(&mut w, FORMAT_VERSION)?;
    write_u32(&mut w, data.handles as u32)?;
    write_u32(&mut w, data.frame_count() as u32)?;
    write_f64(&mut w, data.dt)?;
    let prim_counts: Vec<usize> = data
        .points
        .first()
        .map(|f| f.iter().map(|p| p.len()).collect())
        .unwrap_or_default();
    write_u32(&mut w, prim_counts.len() as u32)?;
    for &k in &prim_counts {
        write_u32(&mut w, k as u32)?;
    }
    for (z, frame_pts) in data.z.iter().zip(&data.points) {
        if z.len() != 12 * data.handles {
            return Err(FormatError::Corrupt("z length mismatch".into()));
        }
        for &v in z {
            write_f64(&mut w, v)?;
        }
        for (p, &k) in frame_pts.iter().zip(&prim_counts) {
            if p.len() != k {
                return Err(FormatError::Corrupt("point count drifted across frames".into()));
            }
            for q in p {
                for &c in q {
                    write_f64(&mut w, c)?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_trajectory<R: Read>(mut r: R) -> Result<TrajectoryData, FormatError> {
    check_header(&mut r, TRAJ_MAGIC)?;
    let handles = read_u32(&mut r)? as usize;
    let frames = read_u32(&mut r)? as usize;
    let dt = read_f64(&mut r)?;
    let n_prims = read_u32(&mut r)? as usize;
    let mut prim_counts = Vec::with_capacity(n_prims);
    for _ in 0..n_prims {
        prim_counts.push(read_u32(&mut r)? as usize);
    }
    let mut z = Vec::with_capacity(frames);
    let mut points = Vec::with_capacity(frames);
    for _ in 0..frames {
        let mut zf = Vec::with_capacity(12 * handles);
        for _ in 0..12 * handles {
            zf.push(read_f64(&mut r)?);
        }
        z.push(zf);
        let mut fp = Vec::with_capacity(n_prims);
        for &k in &prim_counts {
            let mut pp = Vec::with_capacity(k);
            for _ in 0..k {
                pp.push([read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?]);
            }
            fp.push(pp);
        }
        points.push(fp);
    }
    Ok(TrajectoryData {
        handles,
        dt,
        z,
        points,
    })
}

pub fn save_trajectory(data: &TrajectoryData, path: &Path) -> Result<(), FormatError> {
    let f = std::fs::File::create(path)?;
    write_trajectory(data, io::BufWriter::new(f))
}

pub fn load_trajectory(path: &Path) -> Result<TrajectoryData, FormatError> {
    let f = std::fs::File::open(path)?;
    read_trajectory(io::BufReader::new(f))
}

/// Skinning file: header (layer sizes, M, domain box) + flat f64 parameters.
pub fn write_skinning<W: Write>(field: &SkinningField, mut w: W) -> Result<(), FormatError> {
    w.write_all(SKIN_MAGIC)?;
    write_u32(&mut w, FORMAT_VERSION)?;
    write_u32(&mut w, field.num_handles() as u32)?;
    let sizes = field.layer_sizes();
    write_u32(&mut w, sizes.len() as u32)?;
    for &s in sizes {
        write_u32(&mut w, s as u32)?;
    }
    let db = field.domain_box();
    for v in [db.lo.x, db.lo.y, db.lo.z, db.hi.x, db.hi.y, db.hi.z] {
        write_f64(&mut w, v)?;
    }
    write_u64(&mut w, field.params().len() as u64)?;
    for &p in field.params() {
        write_f64(&mut w, p)?;
    }
    Ok(())
}

pub fn read_skinning<R: Read>(mut r: R) -> Result<SkinningField, FormatError> {
    check_header(&mut r, SKIN_MAGIC)?;
    let handles = read_u32(&mut r)? as usize;
    let n_sizes = read_u32(&mut r)? as usize;
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(read_u32(&mut r)? as usize);
    }
    let lo = Vector3::new(read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
    let hi = Vector3::new(read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
    let count = read_u64(&mut r)? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(read_f64(&mut r)?);
    }
    let field = SkinningField::from_parts(sizes, params, DomainBox::new(lo, hi))
        .map_err(|e| FormatError::Corrupt(e.to_string()))?;
    if field.num_handles() != handles {
        return Err(FormatError::Corrupt(format!(
            "handle count {} disagrees with layer sizes ({})",
            handles,
            field.num_handles()
        )));
    }
    Ok(field)
}

pub fn save_skinning(field: &SkinningField, path: &Path) -> Result<(), FormatError> {
    let f = std::fs::File::create(path)?;
    write_skinning(field, io::BufWriter::new(f))
}

pub fn load_skinning(path: &Path) -> Result<SkinningField, FormatError> {
    let f = std::fs::File::open(path)?;
    read_skinning(io::BufReader::new(f))
}

/// Fitted-field file: per primitive K, points, color, opacity, alpha, beta.
pub fn write_field<W: Write>(field: &ConvexField, mut w: W) -> Result<(), FormatError> {
    w.write_all(FIELD_MAGIC)?;
    write_u32(&mut w, FORMAT_VERSION)?;
    write_u32(&mut w, field.rest_primitives.len() as u32)?;
    for p in &field.rest_primitives {
        write_u32(&mut w, p.points.len() as u32)?;
        for q in &p.points {
            for c in 0..3 {
                write_f64(&mut w, q[c])?;
            }
        }
        for &c in &p.color {
            write_f64(&mut w, c)?;
        }
        write_f64(&mut w, p.opacity)?;
        write_f64(&mut w, p.smoothness)?;
        write_f64(&mut w, p.sharpness)?;
    }
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<ConvexField, FormatError> {
    check_header(&mut r, FIELD_MAGIC)?;
    let n = read_u32(&mut r)? as usize;
    let mut prims = Vec::with_capacity(n);
    for _ in 0..n {
        let k = read_u32(&mut r)? as usize;
        let mut pts = Vec::with_capacity(k);
        for _ in 0..k {
            pts.push(Vector3::new(
                read_f64(&mut r)?,
                read_f64(&mut r)?,
                read_f64(&mut r)?,
            ));
        }
        let color = [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?];
        let opacity = read_f64(&mut r)?;
        let alpha = read_f64(&mut r)?;
        let beta = read_f64(&mut r)?;
        prims.push(
            ConvexPrimitive::new(pts, color, opacity, alpha, beta)
                .map_err(|e| FormatError::Corrupt(e.to_string()))?,
        );
    }
    Ok(ConvexField::from_rest(prims))
}

pub fn save_field(field: &ConvexField, path: &Path) -> Result<(), FormatError> {
    let f = std::fs::File::create(path)?;
    write_field(field, io::BufWriter::new(f))
}

pub fn load_field(path: &Path) -> Result<ConvexField, FormatError> {
    let f = std::fs::File::open(path)?;
    read_field(io::BufReader::new(f))
}

/// Camera + timestamp sidecar written next to each exported frame.
#[derive(Debug, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame: usize,
    pub time: f64,
    pub camera: CameraMeta,
    pub background: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CameraMeta {
    pub position: [f64; 3],
    /// World-to-camera rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
}

impl CameraMeta {
    pub fn of(c: &Camera) -> Self {
        let r = |i: usize| [c.rotation[(i, 0)], c.rotation[(i, 1)], c.rotation[(i, 2)]];
        Self {
            position: [c.position.x, c.position.y, c.position.z],
            rotation: [r(0), r(1), r(2)],
            focal: c.focal,
            width: c.width,
            height: c.height,
            near: c.near,
        }
    }
}

/// Line-delimited JSON records shared by the commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record {
    /// One identification evaluation.
    Eval {
        iteration: usize,
        log10_e: f64,
        nu: f64,
        loss: f64,
    },
    IdentifyResult {
        log10_e: f64,
        youngs_modulus: f64,
        nu: f64,
        iterations: usize,
        loss_first: f64,
        loss_final: f64,
    },
    FrameMetrics {
        frame: usize,
        psnr: f64,
        ssim: f64,
    },
    MetricsSummary {
        frames: usize,
        mean_psnr: f64,
        mean_ssim: f64,
    },
    FitRest {
        iterations: usize,
        loss_first: f64,
        loss_final: f64,
    },
    SkinningTrained {
        steps: usize,
        final_loss: f64,
        final_elastic: f64,
        final_ortho: f64,
    },
    Ablation {
        k: usize,
        m: usize,
        primitives: usize,
        points: usize,
        planes: usize,
        mean_psnr: f64,
        mean_ssim: f64,
    },
    Error {
        message: String,
    },
}

pub fn write_records(records: &[Record], path: &Path) -> Result<(), FormatError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialization"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
