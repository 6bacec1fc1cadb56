//! Conditional 3D voxel GANs with a paired generator step: one latent vector
//! is rendered under every orientation condition, the outputs are rotated back
//! into a common frame, averaged, and judged by the discriminator, which
//! pushes the generator toward producing the same object for every condition.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod training;
pub mod voxel;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use voxel::{Condition, VoxelGrid};

pub type Grid32 = VoxelGrid<f32>;
pub type Grid64 = VoxelGrid<f64>;
