use serde::{Deserialize, Serialize};

use super::config::ModelConfig;

pub const KERNEL: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    TransposedConv,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

/// Shape contract of one layer. Spatial extents are cube edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_extent: usize,
    pub out_extent: usize,
    pub stride: usize,
    pub padding: usize,
    /// Batch norm on this layer's output (hidden layers only).
    pub norm: bool,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn weight_len(&self) -> usize {
        self.in_channels * self.out_channels * KERNEL.pow(3)
    }

    pub fn in_len(&self) -> usize {
        self.in_channels * self.in_extent.pow(3)
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.out_extent.pow(3)
    }

    /// Final layers feed a sigmoid directly and carry a bias; hidden layers
    /// are normalized, which would cancel one.
    pub fn has_bias(&self) -> bool {
        !self.norm
    }
}

fn hidden_channels(config: &ModelConfig) -> Vec<usize> {
    let steps = (config.resolution / 4).trailing_zeros() as usize;
    (0..steps)
        .map(|i| (config.base_channels >> i).max(1))
        .collect()
}

impl ModelConfig {
    /// `1³ -> 4³×base -> 8³×base/2 -> ... -> R³×1`: a stride-1 projection
    /// followed by stride-2, padding-1 upsampling layers.
    pub fn generator_plan(&self) -> Vec<LayerSpec> {
        let hidden = hidden_channels(self);
        let mut plan = Vec::with_capacity(hidden.len() + 1);
        let mut in_channels = self.latent_dim + self.condition_width();
        let mut extent = 1;
        for (i, out_channels) in hidden.iter().copied().chain([1]).enumerate() {
            let last = i == hidden.len();
            let (stride, padding, out_extent) = if i == 0 {
                (1, 0, 4)
            } else {
                (2, 1, extent * 2)
            };
            plan.push(LayerSpec {
                kind: LayerKind::TransposedConv,
                in_channels,
                out_channels,
                in_extent: extent,
                out_extent,
                stride,
                padding,
                norm: !last,
                activation: if last {
                    Activation::Sigmoid
                } else {
                    Activation::Relu
                },
            });
            in_channels = out_channels;
            extent = out_extent;
        }
        plan
    }

    /// Mirror of the generator: stride-2 downsampling to `4³`, then a
    /// stride-1 `4³ -> 1³` head. The first layer is normalized only when
    /// `discriminator_input_norm` is set.
    pub fn discriminator_plan(&self) -> Vec<LayerSpec> {
        let hidden: Vec<usize> = hidden_channels(self).into_iter().rev().collect();
        let mut plan = Vec::with_capacity(hidden.len() + 1);
        let mut in_channels = 1 + self.condition_width();
        let mut extent = self.resolution;
        for (i, out_channels) in hidden.into_iter().enumerate() {
            plan.push(LayerSpec {
                kind: LayerKind::Conv,
                in_channels,
                out_channels,
                in_extent: extent,
                out_extent: extent / 2,
                stride: 2,
                padding: 1,
                norm: i > 0 || self.discriminator_input_norm,
                activation: Activation::LeakyRelu(self.leaky_slope),
            });
            in_channels = out_channels;
            extent /= 2;
        }
        plan.push(LayerSpec {
            kind: LayerKind::Conv,
            in_channels,
            out_channels: 1,
            in_extent: extent,
            out_extent: 1,
            stride: 1,
            padding: 0,
            norm: false,
            activation: Activation::Sigmoid,
        });
        plan
    }
}
