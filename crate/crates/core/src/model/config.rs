use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxel::Condition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionEncoding {
    /// The raw condition index as one extra input component / channel.
    Scalar,
    OneHot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentPrior {
    Normal,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub resolution: usize,
    pub latent_dim: usize,
    pub base_channels: usize,
    pub n_conditions: usize,
    pub condition_encoding: ConditionEncoding,
    pub latent_prior: LatentPrior,
    pub leaky_slope: f64,
    pub init_std: f64,
    /// Batch-normalize the discriminator's first layer as well.
    pub discriminator_input_norm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            resolution: 32,
            latent_dim: 200,
            base_channels: 256,
            n_conditions: 2,
            condition_encoding: ConditionEncoding::Scalar,
            latent_prior: LatentPrior::Normal,
            leaky_slope: 0.2,
            init_std: 0.02,
            discriminator_input_norm: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let r = self.resolution;
        if r < 4 || !r.is_multiple_of(4) || !(r / 4).is_power_of_two() {
            return Err(Error::config(
                "model.resolution",
                format!("{r} is not 4 * 2^k"),
            ));
        }
        if self.latent_dim == 0 {
            return Err(Error::config("model.latent_dim", "must be positive"));
        }
        if self.base_channels == 0 {
            return Err(Error::config("model.base_channels", "must be positive"));
        }
        Condition::check_count(self.n_conditions)
            .map_err(|e| Error::config("model.n_conditions", e.to_string()))?;
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("model.leaky_slope", "must lie in (0, 1)"));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::config("model.init_std", "must be positive"));
        }
        Ok(())
    }

    /// Extra generator inputs / discriminator channels carrying the condition.
    pub fn condition_width(&self) -> usize {
        match self.condition_encoding {
            ConditionEncoding::Scalar => 1,
            ConditionEncoding::OneHot => self.n_conditions,
        }
    }

    pub fn cells(&self) -> usize {
        self.resolution.pow(3)
    }

    /// Writes the condition encoding into `out` (length `condition_width`).
    pub(crate) fn encode_condition(&self, c: Condition, out: &mut [f64]) {
        match self.condition_encoding {
            ConditionEncoding::Scalar => out[0] = c.index() as f64,
            ConditionEncoding::OneHot => {
                out.fill(0.0);
                out[c.index()] = 1.0;
            }
        }
    }
}
