use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    init_discriminator, init_generator, DiscriminatorParams, GeneratorParams, LatentVector, Mode,
    ModelConfig,
};
use crate::scalar::{cast, Scalar};
use crate::voxel::Condition;

use super::adam::Adam;
use super::config::TrainConfig;
use super::objective::{
    expand_pairs, g_loss_gradients, paired_g_loss_gradients, DiscriminatorPass,
};

/// Real samples for one step: `R³` grids back to back with their conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct RealBatch<T: Scalar> {
    pub grids: Vec<T>,
    pub conditions: Vec<Condition>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Zero when the paired step is disabled.
    pub pair_loss: f64,
    pub d_accuracy_prev: f64,
    pub d_updated: bool,
}

impl fmt::Display for StepLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.step,
            self.d_loss,
            self.g_loss,
            self.pair_loss,
            self.d_accuracy_prev,
            u8::from(self.d_updated)
        )
    }
}

impl StepLog {
    pub const HEADER: &'static str =
        "# step\td_loss\tg_loss\tpair_loss\td_accuracy_prev\td_updated";
}

impl FromStr for StepLog {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let bad = || Error::format(0, format!("bad log line `{line}`"));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            step: f[0].parse().map_err(|_| bad())?,
            d_loss: num(f[1])?,
            g_loss: num(f[2])?,
            pair_loss: num(f[3])?,
            d_accuracy_prev: num(f[4])?,
            d_updated: match f[5] {
                "1" => true,
                "0" => false,
                _ => return Err(bad()),
            },
        })
    }
}

/// Everything a run needs to continue exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T: Scalar> {
    pub config: TrainConfig,
    pub gen: GeneratorParams<T>,
    pub disc: DiscriminatorParams<T>,
    pub gen_opt: Adam<T>,
    pub disc_opt: Adam<T>,
    /// Steps completed.
    pub step: u64,
    /// Discriminator accuracy on the previous batch; starts at 0 so the first
    /// step always trains the discriminator.
    pub prev_accuracy: f64,
}

fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_7465_6e74_7321);
    rng.set_stream(step);
    rng
}

fn ensure_finite(what: &str, v: f64, step: u64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric {
            layer: 0,
            message: format!("{what} is {v} at step {step}"),
        })
    }
}

impl<T: Scalar> TrainState<T> {
    pub fn new(model: &ModelConfig, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let gen = init_generator(model, config.seed)?;
        let disc = init_discriminator(model, config.seed)?;
        Ok(Self {
            gen_opt: Adam::new(&gen.net),
            disc_opt: Adam::new(&disc.net),
            gen,
            disc,
            config,
            step: 0,
            prev_accuracy: 0.0,
        })
    }

    pub fn model_config(&self) -> &ModelConfig {
        &self.gen.config
    }

    /// Latents drawn for `step`; a pure function of the seed and step.
    pub fn latents(&self, step: u64) -> Vec<LatentVector<T>> {
        let m = self.model_config();
        let mut rng = step_rng(self.config.seed, step);
        (0..self.config.batch_size)
            .map(|_| LatentVector::sample(m.latent_dim, m.latent_prior, &mut rng))
            .collect()
    }

    /// One training step:
    /// 1. discriminator update on reals and fresh fakes, skipped while the
    ///    previous batch accuracy is at or above the gate;
    /// 2. generator update on the same fakes;
    /// 3. if enabled, a generator-only update on the aligned and merged fakes.
    pub fn train_step(&mut self, batch: &RealBatch<T>) -> Result<StepLog> {
        let cfg = self.config.clone();
        let eps = cfg.prob_clamp;
        let step = self.step;
        let n = self.model_config().n_conditions;
        let conditions = Condition::all(n)?;
        let zs = self.latents(step);
        let (rows, row_conds) = expand_pairs(&zs, &conditions);

        let gen_fwd = self.gen.forward(&rows, &row_conds, Mode::Train)?;
        self.gen.net.update_running_stats(&gen_fwd);

        let pass = DiscriminatorPass::run(
            &self.disc,
            &batch.grids,
            &batch.conditions,
            gen_fwd.output(),
            &row_conds,
            eps,
        )?;
        let d_loss = pass.loss.to_f64_lossy();
        ensure_finite("d_loss", d_loss, step)?;
        let d_updated = self.prev_accuracy < cfg.gate_threshold;
        if d_updated {
            let grads = pass.gradients(&self.disc, eps)?;
            self.disc_opt
                .step(&mut self.disc.net, &grads, cfg.discriminator_adam());
            self.disc.net.update_running_stats(&pass.real);
            self.disc.net.update_running_stats(&pass.fake);
        }

        let (g_loss, grads) = g_loss_gradients(
            &self.gen,
            &gen_fwd,
            &self.disc,
            &row_conds,
            eps,
            cfg.generator_loss,
        )?;
        let g_loss = g_loss.to_f64_lossy();
        ensure_finite("g_loss", g_loss, step)?;
        self.gen_opt
            .step(&mut self.gen.net, &grads, cfg.generator_adam());

        let mut pair_loss = 0.0;
        if cfg.paired_step_enabled {
            let (loss, mut grads) = paired_g_loss_gradients(
                &self.gen,
                &self.disc,
                &zs,
                &conditions,
                eps,
                cfg.generator_loss,
            )?;
            pair_loss = loss.to_f64_lossy();
            ensure_finite("pair_loss", pair_loss, step)?;
            grads.scale(cast(cfg.pair_loss_weight));
            self.gen_opt
                .step(&mut self.gen.net, &grads, cfg.generator_adam());
        }

        let log = StepLog {
            step,
            d_loss,
            g_loss,
            pair_loss,
            d_accuracy_prev: self.prev_accuracy,
            d_updated,
        };
        self.prev_accuracy = pass.accuracy;
        self.step += 1;
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_line_roundtrip() {
        let log = StepLog {
            step: 12,
            d_loss: 1.25,
            g_loss: 0.5,
            pair_loss: 0.75,
            d_accuracy_prev: 0.96875,
            d_updated: false,
        };
        let line = log.to_string();
        assert_eq!(line.split('\t').count(), 6);
        let back: StepLog = line.parse().unwrap();
        assert_eq!(back, log);
        assert!("1\t2".parse::<StepLog>().is_err());
    }
}
