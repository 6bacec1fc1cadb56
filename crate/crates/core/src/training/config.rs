use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::adam::AdamHyper;
use super::loss::GeneratorLossForm;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Latent vectors per step, and real samples per condition.
    pub batch_size: usize,
    pub epochs: u64,
    /// Caps the run length in steps regardless of `epochs`.
    pub max_steps: Option<u64>,
    /// The discriminator trains only while the previous batch accuracy is below this.
    pub gate_threshold: f64,
    pub paired_step_enabled: bool,
    pub pair_loss_weight: f64,
    pub generator_loss: GeneratorLossForm,
    pub seed: u64,
    pub prob_clamp: f64,
    /// Write a checkpoint every this many steps; 0 writes only the first and last.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_generator: 0.0025,
            lr_discriminator: 0.00005,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 128,
            epochs: 1500,
            max_steps: None,
            gate_threshold: 0.95,
            paired_step_enabled: true,
            pair_loss_weight: 1.0,
            generator_loss: GeneratorLossForm::NonSaturating,
            seed: 0,
            prob_clamp: 1e-7,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive, got {v}")))
            }
        };
        positive("train.lr_generator", self.lr_generator)?;
        positive("train.lr_discriminator", self.lr_discriminator)?;
        positive("train.adam_eps", self.adam_eps)?;
        for (key, v) in [
            ("train.adam_beta1", self.adam_beta1),
            ("train.adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(key, format!("must lie in [0, 1), got {v}")));
            }
        }
        if !(self.gate_threshold > 0.0 && self.gate_threshold <= 1.0) {
            return Err(Error::config(
                "train.gate_threshold",
                format!("must lie in (0, 1], got {}", self.gate_threshold),
            ));
        }
        if self.batch_size < 2 {
            return Err(Error::config("train.batch_size", "must be at least 2"));
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return Err(Error::config("train.prob_clamp", "must lie in (0, 0.5)"));
        }
        if !(self.pair_loss_weight >= 0.0 && self.pair_loss_weight.is_finite()) {
            return Err(Error::config(
                "train.pair_loss_weight",
                "must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn generator_adam(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr_generator,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn discriminator_adam(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr_discriminator,
            ..self.generator_adam()
        }
    }
}
