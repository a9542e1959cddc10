//! Pipeline orchestration for the convexdyn engine: scene configuration,
//! procedural shapes, serialization formats, and the command surface.

pub mod ablation;
pub mod commands;
pub mod config;
pub mod formats;
pub mod shapes;
