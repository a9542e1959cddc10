//! convexdyn: mesh-free deformable bodies built from smooth convex primitives.
//!
//! An object is a set of convex hulls of small point clouds. The hull points are
//! the only geometric state: they are advected by a reduced-order deformation map
//! driven by neural skinning weights, stepped in time with implicit Euler, and
//! rendered by splatting the projected hulls with a log-sum-exp occupancy.
//! Material parameters (Young's modulus, Poisson's ratio) are recovered from
//! rendered frame sequences by minimizing pixel loss through the simulator.

pub mod convex;
pub mod materials;
pub mod parallel;
pub mod render;
pub mod sim;
pub mod skinning;
pub mod sysid;

pub use convex::{ConvexField, ConvexPrimitive, HalfSpaceSet, Plane};
pub use materials::MaterialParams;
pub use render::{Camera, Image};
pub use sim::{ReducedState, SceneConditions};
pub use skinning::{CubatureSet, SkinningField};
