//! Conditional generator `G(z|y)` and discriminator `D(x|y)` as 3D
//! (transposed) convolution stacks with hand-written reverse-mode gradients.

mod config;
mod conv;
mod gan;
mod network;
mod norm;
mod plan;

pub use config::{ConditionEncoding, LatentPrior, ModelConfig};
pub use conv::{col2im, im2col, Geometry};
pub use gan::{
    discriminator_forward, generator_forward, init_discriminator, init_generator,
    DiscriminatorParams, GeneratorParams, LatentVector,
};
pub use network::{Forward, Gradients, Layer, Mode, Network, Upstream};
pub use norm::BatchNorm;
pub use plan::{Activation, LayerKind, LayerSpec, KERNEL};
