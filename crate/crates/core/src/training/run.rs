use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{self, Batcher, ConditionedSample, DatasetSpec};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::scalar::Scalar;

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::config::TrainConfig;
use super::step::{RealBatch, StepLog, TrainState};

pub const LOG_NAME: &str = "train.log";

/// The full configuration tree of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub dataset: DatasetSpec,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.dataset.validate()?;
        if self.dataset.resolution != self.model.resolution {
            return Err(Error::config(
                "dataset.resolution",
                format!(
                    "{} differs from model.resolution {}",
                    self.dataset.resolution, self.model.resolution
                ),
            ));
        }
        if self.dataset.n_conditions != self.model.n_conditions {
            return Err(Error::config(
                "dataset.n_conditions",
                format!(
                    "{} differs from model.n_conditions {}",
                    self.dataset.n_conditions, self.model.n_conditions
                ),
            ));
        }
        Ok(())
    }
}

/// Draws each step's real batch: up to `batch_size` samples per condition,
/// each condition walking its own seeded epoch order. Conditions with fewer
/// samples cycle.
pub struct RealSampler<T: Scalar> {
    pools: Vec<Vec<ConditionedSample<T>>>,
    batchers: Vec<Batcher>,
    cached: Option<(u64, Vec<Vec<Vec<usize>>>)>,
}

impl<T: Scalar> RealSampler<T> {
    pub fn new(
        samples: Vec<ConditionedSample<T>>,
        n_conditions: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut pools: Vec<Vec<ConditionedSample<T>>> = vec![Vec::new(); n_conditions];
        for s in samples {
            let i = s.condition.index();
            if s.condition.n_conditions() != n_conditions {
                return Err(Error::contract(
                    "sample condition count differs from the model",
                ));
            }
            pools[i].push(s);
        }
        if let Some(i) = pools.iter().position(Vec::is_empty) {
            return Err(Error::contract(format!(
                "no training samples for condition {i}"
            )));
        }
        let batchers = pools
            .iter()
            .enumerate()
            .map(|(i, p)| Batcher::new(p.len(), batch_size, seed.wrapping_add(i as u64 + 1)))
            .collect::<Result<_>>()?;
        Ok(Self {
            pools,
            batchers,
            cached: None,
        })
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.batchers
            .iter()
            .map(|b| b.batches_per_epoch())
            .max()
            .unwrap_or(0) as u64
    }

    pub fn batch(&mut self, step: u64) -> RealBatch<T> {
        let spe = self.steps_per_epoch();
        let (epoch, j) = (step / spe, (step % spe) as usize);
        if self.cached.as_ref().is_none_or(|(e, _)| *e != epoch) {
            let plans = self.batchers.iter().map(|b| b.epoch(epoch)).collect();
            self.cached = Some((epoch, plans));
        }
        let plans = &self.cached.as_ref().unwrap().1;
        let mut grids = Vec::new();
        let mut conditions = Vec::new();
        for (pool, plan) in self.pools.iter().zip(plans) {
            for &i in &plan[j % plan.len()] {
                grids.extend_from_slice(pool[i].grid.values());
                conditions.push(pool[i].condition);
            }
        }
        RealBatch { grids, conditions }
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub steps: u64,
    pub final_checkpoint: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub last_log: Option<StepLog>,
}

pub fn checkpoint_name(step: u64) -> String {
    format!("step_{step:08}.pvgan")
}

fn open_log(path: &Path, fresh: bool) -> Result<fs::File> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(!fresh)
        .write(true)
        .truncate(fresh)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh {
        writeln!(f, "{}", StepLog::HEADER).map_err(|e| Error::io(path, e))?;
    }
    Ok(f)
}

/// Trains per `run`, writing checkpoints and the step log under `out_dir`.
/// With `resume`, continues from that checkpoint's state and appends to the log.
pub fn train(run: &RunConfig, out_dir: &Path, resume: Option<&Path>) -> Result<TrainSummary> {
    run.validate()?;
    let ckpt_dir = out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;

    let samples: Vec<ConditionedSample<f32>> = dataset::prepare(&run.dataset)?;
    let mut sampler = RealSampler::new(
        samples,
        run.model.n_conditions,
        run.train.batch_size,
        run.train.seed,
    )?;
    let total = run
        .train
        .max_steps
        .unwrap_or(run.train.epochs * sampler.steps_per_epoch());

    let mut state: TrainState<f32> = match resume {
        Some(path) => {
            let mut s: TrainState<f32> = load_checkpoint(path)?;
            if s.model_config() != &run.model {
                return Err(Error::config(
                    "model",
                    "resume checkpoint was trained with a different model config",
                ));
            }
            // The run's schedule (e.g. a larger step budget) wins over the
            // one recorded in the checkpoint.
            s.config = run.train.clone();
            s
        }
        None => TrainState::new(&run.model, run.train.clone())?,
    };
    let log_path = out_dir.join(LOG_NAME);
    let mut log = open_log(&log_path, resume.is_none())?;
    let mut checkpoints = Vec::new();
    let save = |state: &TrainState<f32>, checkpoints: &mut Vec<PathBuf>| -> Result<()> {
        let p = ckpt_dir.join(checkpoint_name(state.step));
        save_checkpoint(state, &p)?;
        checkpoints.push(p);
        Ok(())
    };
    if resume.is_none() {
        save(&state, &mut checkpoints)?;
    }
    let mut last_log = None;
    while state.step < total {
        let batch = sampler.batch(state.step);
        let entry = state.train_step(&batch)?;
        writeln!(log, "{entry}").map_err(|e| Error::io(&log_path, e))?;
        if entry.step % 50 == 0 {
            log::info!("{entry}");
        }
        last_log = Some(entry);
        let every = run.train.checkpoint_every;
        if every > 0 && state.step.is_multiple_of(every) && state.step < total {
            save(&state, &mut checkpoints)?;
        }
    }
    if checkpoints
        .last()
        .is_none_or(|p| *p != ckpt_dir.join(checkpoint_name(state.step)))
    {
        save(&state, &mut checkpoints)?;
    }
    let final_checkpoint = out_dir.join("final.pvgan");
    save_checkpoint(&state, &final_checkpoint)?;
    Ok(TrainSummary {
        steps: state.step,
        final_checkpoint,
        checkpoints,
        last_log,
    })
}
