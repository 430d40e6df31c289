//! Desk-scale Real2Sim engine core.
//!
//! A manipulation scene is represented as bound assets: triangle meshes,
//! Gaussian (or surfel) primitives attached to those meshes, an MDH joint
//! chain for the arm, and rigid bodies for free objects. The crate animates
//! the scene with forward kinematics and Newton–Euler dynamics, renders every
//! timestep with a CPU tile-based splatting rasterizer, and fits physics
//! parameters (mass, friction, damping, initial velocity) to observed
//! trajectories with a derivative-free solver.
//!
//! Module map:
//! - [`geometry`] — poses, cameras, Gaussian/surfel primitives, projection.
//! - [`binding`] — the Gaussian↔mesh attachment and rigid forward deformation.
//! - [`kinematics`] — MDH serial chains, FK, relative link motion, IK.
//! - [`dynamics`] — Newton–Euler bodies, semi-implicit Euler, ground contact.
//! - [`renderer`] — tile-based splat rasterizer with SH radiance and
//!   per-pixel instance labels.
//! - [`assets`] — scene bundle I/O (OBJ, PLY, URDF, trajectories), scene
//!   alignment, mesh cleaning, mesh quality metrics.
//! - [`estimation`] — trajectory loss and bounded derivative-free search.
//!
//! All numerics are `f64`; file formats convert at the boundary. The world
//! frame is right-handed y-up.

pub mod assets;
pub mod binding;
pub mod dynamics;
pub mod estimation;
pub mod geometry;
pub mod kinematics;
pub mod renderer;

#[cfg(test)]
pub(crate) mod testutil;

pub use binding::{BindingMap, BindingRecord, TriangleMesh};
pub use dynamics::{ContactParams, Environment, RigidState, Wrench};
pub use geometry::{Camera, GaussianPrimitive, Pose, SurfelPrimitive};
pub use kinematics::{JointTrajectory, MdhChain, MdhLink};
pub use renderer::{RenderConfig, RenderOutput};
