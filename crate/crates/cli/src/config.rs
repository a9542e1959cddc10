//! Scene configuration: a single TOML file with fail-fast parsing (unknown
//! keys are errors) and spec'd defaults for every optional section.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use convexdyn_core::materials::MaterialParams;
use convexdyn_core::render::Camera;
use convexdyn_core::sim::{ExternalForce, Floor, SceneConditions};
use convexdyn_core::skinning::TrainHyper;
use convexdyn_core::sysid::{FitRestHyper, IdentifyHyper};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse: {0}")]
    Parse(String),
    #[error("config validation: {0}")]
    Invalid(String),
    #[error("file io: {0}")]
    Io(#[from] std::io::Error),
}

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub shape: ShapeConfig,
    pub material: MaterialConfig,
    pub conditions: ConditionsConfig,
    pub sim: SimConfig,
    #[serde(default)]
    pub skinning: SkinningConfig,
    pub render: RenderConfig,
    #[serde(default)]
    pub identify: IdentifyConfig,
    #[serde(default)]
    pub fit_rest: FitRestConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Box,
    BlockyGrid,
    SphereOfConvexes,
    TorusSegments,
    Points,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub kind: ShapeKind,
    #[serde(default)]
    pub center: [f64; 3],
    /// box
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_extents: Option<[f64; 3]>,
    /// blocky_grid: cell edge length and cell counts per axis
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<[usize; 3]>,
    /// sphere_of_convexes: overall radius and number of convex chunks
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// torus_segments
    #[serde(skip_serializing_if = "Option::is_none")]
    pub major_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minor_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segments: Option<usize>,
    /// explicit point lists, one per primitive
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<[f64; 3]>>>,
    #[serde(default = "default_color")]
    pub color: [f64; 3],
    #[serde(default = "default_opacity")]
    pub opacity: f64,
    /// Occupancy smoothness (1/world units).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Occupancy sharpness.
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_color() -> [f64; 3] {
    [0.75, 0.25, 0.2]
}

fn default_opacity() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    600.0
}

fn default_beta() -> f64 {
    3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub youngs_modulus: f64,
    pub poissons_ratio: f64,
    pub density: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsConfig {
    #[serde(default)]
    pub gravity: [f64; 3],
    #[serde(default = "default_penalty")]
    pub penalty_stiffness: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<FloorConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_force: Option<ExternalForceConfig>,
}

fn default_penalty() -> f64 {
    1e5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloorConfig {
    pub height: f64,
    #[serde(default = "default_up")]
    pub normal: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalForceConfig {
    pub accel: [f64; 3],
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub steps: usize,
    /// Number of skinning handles M.
    #[serde(default = "default_handles")]
    pub handles: usize,
    /// Points per procedurally generated convex (K).
    #[serde(default = "default_k")]
    pub points_per_convex: usize,
    #[serde(default = "default_cubature")]
    pub cubature: usize,
}

fn default_handles() -> usize {
    10
}

fn default_k() -> usize {
    6
}

fn default_cubature() -> usize {
    400
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkinningConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch: usize,
    pub lambda_elastic: f64,
    pub lambda_ortho: f64,
    pub sigma_start: f64,
    pub sigma_end: f64,
}

impl Default for SkinningConfig {
    fn default() -> Self {
        let h = TrainHyper::default();
        Self {
            steps: h.steps,
            learning_rate: h.learning_rate,
            batch: h.batch,
            lambda_elastic: h.lambda_elastic,
            lambda_ortho: h.lambda_ortho,
            sigma_start: h.sigma_start,
            sigma_end: h.sigma_end,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    #[serde(default = "default_near")]
    pub near: f64,
    #[serde(default = "default_background")]
    pub background: [f64; 3],
    #[serde(rename = "camera")]
    pub cameras: Vec<CameraConfig>,
}

fn default_near() -> f64 {
    0.01
}

fn default_background() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub position: [f64; 3],
    pub target: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyConfig {
    pub max_iterations: usize,
    pub finetune_theta: bool,
    pub theta_learning_rate: f64,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        let h = IdentifyHyper::default();
        Self {
            max_iterations: h.max_iterations,
            finetune_theta: h.finetune_theta,
            theta_learning_rate: h.theta_lr,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRestConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub lambda_dssim: f64,
    pub beta_opacity: f64,
}

impl Default for FitRestConfig {
    fn default() -> Self {
        let h = FitRestHyper::default();
        Self {
            iterations: h.iterations,
            learning_rate: h.learning_rate,
            lambda_dssim: h.lambda_dssim,
            beta_opacity: h.beta_opacity,
        }
    }
}

impl SceneConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "unknown schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.sim.points_per_convex < 4 {
            return Err(ConfigError::Invalid(format!(
                "points_per_convex {} must be >= 4",
                self.sim.points_per_convex
            )));
        }
        if !(1..=64).contains(&self.sim.handles) {
            return Err(ConfigError::Invalid(format!(
                "handles {} outside [1, 64]",
                self.sim.handles
            )));
        }
        if self.sim.dt <= 0.0 {
            return Err(ConfigError::Invalid("sim.dt must be positive".into()));
        }
        if self.sim.cubature < 100 {
            return Err(ConfigError::Invalid(format!(
                "cubature {} must be >= 100",
                self.sim.cubature
            )));
        }
        if self.render.cameras.is_empty() {
            return Err(ConfigError::Invalid("at least one [[render.camera]] required".into()));
        }
        Ok(())
    }

    pub fn material(&self) -> Result<MaterialParams, ConfigError> {
        MaterialParams::new(
            self.material.youngs_modulus,
            self.material.poissons_ratio,
            self.material.density,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn conditions(&self) -> SceneConditions {
        SceneConditions {
            gravity: Vector3::from(self.conditions.gravity),
            floor: self.conditions.floor.as_ref().map(|f| Floor {
                height: f.height,
                normal: Vector3::from(f.normal).normalize(),
                velocity: Vector3::from(f.velocity),
            }),
            external_force: self.conditions.external_force.as_ref().map(|f| ExternalForce {
                accel: Vector3::from(f.accel),
                t_start: f.t_start,
                t_end: f.t_end,
            }),
            penalty_stiffness: self.conditions.penalty_stiffness,
        }
    }

    pub fn train_hyper(&self) -> TrainHyper {
        TrainHyper {
            steps: self.skinning.steps,
            learning_rate: self.skinning.learning_rate,
            batch: self.skinning.batch,
            lambda_elastic: self.skinning.lambda_elastic,
            lambda_ortho: self.skinning.lambda_ortho,
            sigma_start: self.skinning.sigma_start,
            sigma_end: self.skinning.sigma_end,
            seed: derive_seed(self.seed, SeedPurpose::Skinning),
        }
    }

    pub fn identify_hyper(&self) -> IdentifyHyper {
        IdentifyHyper {
            max_iterations: self.identify.max_iterations,
            finetune_theta: self.identify.finetune_theta,
            theta_lr: self.identify.theta_learning_rate,
            ..Default::default()
        }
    }

    pub fn fit_rest_hyper(&self) -> FitRestHyper {
        FitRestHyper {
            iterations: self.fit_rest.iterations,
            learning_rate: self.fit_rest.learning_rate,
            lambda_dssim: self.fit_rest.lambda_dssim,
            beta_opacity: self.fit_rest.beta_opacity,
        }
    }

    pub fn camera(&self, index: usize) -> Result<Camera, ConfigError> {
        let c = self
            .render
            .cameras
            .get(index)
            .ok_or_else(|| ConfigError::Invalid(format!("camera index {index} out of range")))?;
        Camera::look_at(
            Vector3::from(c.position),
            Vector3::from(c.target),
            Vector3::from(c.up),
            self.render.focal,
            self.render.width,
            self.render.height,
            self.render.near,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Purposes for deterministic sub-seed derivation from the global seed.
#[derive(Debug, Clone, Copy)]
pub enum SeedPurpose {
    Cubature,
    Skinning,
    Shapes,
}

pub fn derive_seed(seed: u64, purpose: SeedPurpose) -> u64 {
    let salt: u64 = match purpose {
        SeedPurpose::Cubature => 0xc0ba_7a5e,
        SeedPurpose::Skinning => 0x51a3_b2c1,
        SeedPurpose::Shapes => 0x9a7e_11d0,
    };
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt)
}
