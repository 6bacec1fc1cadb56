use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pairvox::training::{load_checkpoint, train, RunConfig, TrainState};

use crate::OutRoot;

/// A flag or override that could not be applied to the config.
#[derive(Debug)]
pub struct ValidationError(pub String);

impl std::error::Error for ValidationError {}

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// TOML file with `[model]`, `[train]` and `[dataset]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train on N synthetic objects instead of a dataset on disk.
    #[arg(long, value_name = "N", num_args = 0..=1, default_missing_value = "200")]
    pub synthetic: Option<usize>,
    /// Sets both the model and dataset resolution.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Sets both the model and dataset condition count.
    #[arg(long)]
    pub n_conditions: Option<usize>,
    /// Sets both the training and dataset seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    #[arg(long)]
    pub class: Option<String>,
    /// Plain conditional GAN: no paired step.
    #[arg(long, conflicts_with = "paired")]
    pub baseline: bool,
    /// Enable the paired step.
    #[arg(long)]
    pub paired: bool,
    /// Arbitrary `section.key=value` override (value parsed as TOML), repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Run directory name; defaults to one derived from the config hash.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Exact run directory, overriding `--out-root`/`--run-id`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub root: OutRoot,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: RunConfig,
    /// `sha256("config <len>\0" + canonical JSON)`, in hex.
    pub config_hash: String,
    pub overrides: Vec<String>,
    pub resumed_from: Option<PathBuf>,
    pub created_unix: u64,
    pub finished_unix: Option<u64>,
    pub output_dir: PathBuf,
    pub steps: Option<u64>,
    pub final_checkpoint: Option<PathBuf>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn config_hash(config: &RunConfig) -> String {
    let body = serde_json::to_vec(config).expect("config serializes");
    let mut h = Sha256::new();
    h.update(format!("config {}\0", body.len()).as_bytes());
    h.update(&body);
    hex::encode(h.finalize())
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ValidationError(msg.into()).into()
}

/// Applies `a.b=value` to the config through its TOML form, so the config's
/// own deserializer checks the key and the value type.
fn apply_set(config: &RunConfig, assignment: &str) -> Result<RunConfig> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(format!("`--set {assignment}` is not KEY=VALUE")))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut tree = toml::Value::try_from(config).context("serializing config")?;
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = &mut tree;
    for (i, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| {
            invalid(format!(
                "`{key}`: `{}` is not a table",
                parts[..i].join(".")
            ))
        })?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value.clone());
            break;
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    tree.try_into()
        .map_err(|e: toml::de::Error| invalid(format!("`{key}`: {}", e.message())))
}

pub fn resolve_config(args: &TrainArgs) -> Result<(RunConfig, Vec<String>)> {
    let mut config = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<RunConfig>(&text)
                .map_err(|e| invalid(format!("{}: {}", path.display(), e.message())))?
        }
        None => RunConfig::default(),
    };
    let mut overrides = Vec::new();
    if let (Some(ckpt), None) = (&args.resume, &args.config) {
        let state: TrainState<f32> = load_checkpoint(ckpt)?;
        config.dataset.resolution = state.model_config().resolution;
        config.dataset.n_conditions = state.model_config().n_conditions;
        config.model = state.model_config().clone();
        config.train = state.config.clone();
        overrides.push(format!("model, train from {}", ckpt.display()));
    }
    let mut note = |s: String| overrides.push(s);
    if let Some(n) = args.synthetic {
        config.dataset.synthetic = Some(n);
        note(format!("dataset.synthetic={n}"));
    }
    if let Some(r) = args.resolution {
        config.model.resolution = r;
        config.dataset.resolution = r;
        note(format!("model.resolution=dataset.resolution={r}"));
    }
    if let Some(n) = args.n_conditions {
        config.model.n_conditions = n;
        config.dataset.n_conditions = n;
        note(format!("model.n_conditions=dataset.n_conditions={n}"));
    }
    if let Some(e) = args.epochs {
        config.train.epochs = e;
        note(format!("train.epochs={e}"));
    }
    if let Some(s) = args.max_steps {
        config.train.max_steps = Some(s);
        note(format!("train.max_steps={s}"));
    }
    if let Some(s) = args.seed {
        config.train.seed = s;
        config.dataset.seed = s;
        note(format!("train.seed=dataset.seed={s}"));
    }
    if let Some(b) = args.batch_size {
        config.train.batch_size = b;
        note(format!("train.batch_size={b}"));
    }
    if let Some(root) = &args.data_root {
        config.dataset.root_path = root.clone();
        note(format!("dataset.root_path={}", root.display()));
    }
    if let Some(c) = &args.class {
        config.dataset.class_name = c.clone();
        note(format!("dataset.class_name={c}"));
    }
    if args.baseline {
        config.train.paired_step_enabled = false;
        note("train.paired_step_enabled=false".into());
    }
    if args.paired {
        config.train.paired_step_enabled = true;
        note("train.paired_step_enabled=true".into());
    }
    for s in &args.sets {
        config = apply_set(&config, s)?;
        overrides.push(s.clone());
    }
    config.validate()?;
    Ok((config, overrides))
}

fn run_dir(args: &TrainArgs, config: &RunConfig, hash: &str) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    let id = args.run_id.clone().unwrap_or_else(|| {
        let mode = if config.train.paired_step_enabled {
            "paired"
        } else {
            "baseline"
        };
        format!("{}-{mode}-{}", config.dataset.class_name, &hash[..12])
    });
    args.root.out_root.join(id)
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let (config, overrides) = resolve_config(args)?;
    let hash = config_hash(&config);
    let dir = run_dir(args, &config, &hash);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut manifest = RunManifest {
        run_id: file_name(&dir),
        config: config.clone(),
        config_hash: hash,
        overrides,
        resumed_from: args.resume.clone(),
        created_unix: now(),
        finished_unix: None,
        output_dir: dir.clone(),
        steps: None,
        final_checkpoint: None,
    };
    write_manifest(&dir, &manifest)?;
    log::info!("run directory {}", dir.display());
    let summary = train(&config, &dir, args.resume.as_deref())?;
    manifest.finished_unix = Some(now());
    manifest.steps = Some(summary.steps);
    manifest.final_checkpoint = Some(summary.final_checkpoint.clone());
    write_manifest(&dir, &manifest)?;
    println!(
        "trained {} steps; final checkpoint {}",
        summary.steps,
        summary.final_checkpoint.display()
    );
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
