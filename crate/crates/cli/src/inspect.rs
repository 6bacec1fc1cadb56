use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pairvox::metrics::{evaluate as evaluate_pairs, format_table, PairReport};
use pairvox::model::{generator_forward, LatentVector, Mode};
use pairvox::training::{load_checkpoint, TrainState};
use pairvox::voxel::io::{binvox, obj, read_grid, vox1, BinvoxHeader, Payload};
use pairvox::voxel::{align, merge};
use pairvox::{Condition, Grid32};

use crate::run::ValidationError;

#[derive(Args, Debug)]
pub struct GenerateArgs {
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub n_latents: usize,
    /// Generate every condition for each latent (default: only `--condition`).
    #[arg(long)]
    pub all_conditions: bool,
    #[arg(long, default_value_t = 0, conflicts_with = "all_conditions")]
    pub condition: usize,
    /// Also write the aligned and averaged grid of each latent.
    #[arg(long, requires = "all_conditions")]
    pub merge: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fail unless the checkpoint was trained at this resolution.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long, default_value = "generated")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// One or more checkpoints; each becomes a row of the table.
    #[arg(required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Row label per checkpoint (defaults to the run directory name).
    #[arg(long = "label")]
    pub labels: Vec<String>,
    /// Column label.
    #[arg(long, default_value = "synthetic")]
    pub class: String,
    #[arg(long, default_value_t = 128)]
    pub n_latents: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Writes `<out>.txt` (table) and `<out>.jsonl` (records).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// VOX1 or binvox grid.
    pub grid: PathBuf,
    #[arg(long)]
    pub obj: Option<PathBuf>,
    #[arg(long)]
    pub binvox: Option<PathBuf>,
    /// Cells strictly above this are occupied.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f32,
}

fn load(path: &Path, resolution: Option<usize>) -> Result<TrainState<f32>> {
    let state: TrainState<f32> = load_checkpoint(path)?;
    if let Some(r) = resolution {
        let have = state.model_config().resolution;
        if have != r {
            return Err(ValidationError(format!(
                "{} was trained at resolution {have}, not {r}",
                path.display()
            ))
            .into());
        }
    }
    Ok(state)
}

fn write(path: &Path, grid: &Grid32) -> Result<()> {
    fs::write(path, vox1::encode(grid, Payload::auto(grid)))
        .with_context(|| format!("writing {}", path.display()))
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let state = load(&args.checkpoint, args.resolution)?;
    let gen = &state.gen;
    let cfg = &gen.config;
    let conditions = if args.all_conditions {
        Condition::all(cfg.n_conditions)?
    } else {
        vec![Condition::new(args.condition, cfg.n_conditions)?]
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut written = 0;
    for i in 0..args.n_latents {
        let z: LatentVector<f32> = LatentVector::sample(cfg.latent_dim, cfg.latent_prior, &mut rng);
        let zs = vec![z; conditions.len()];
        let grids = generator_forward(gen, &zs, &conditions, Mode::Eval)?;
        for (g, c) in grids.iter().zip(&conditions) {
            write(
                &args.out.join(format!("latent_{i:04}_c{}.vox1", c.index())),
                g,
            )?;
            written += 1;
        }
        if args.merge {
            let merged = merge(&align(&grids, &conditions)?)?;
            write(
                &args.out.join(format!("latent_{i:04}_merged.vox1")),
                &merged,
            )?;
            written += 1;
        }
    }
    println!("wrote {written} grids to {}", args.out.display());
    Ok(())
}

fn default_label(path: &Path) -> String {
    let run_dir = match path.parent() {
        Some(p) if p.file_name().is_some_and(|n| n == "checkpoints") => p.parent(),
        other => other,
    };
    run_dir
        .and_then(|d| d.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    if !args.labels.is_empty() && args.labels.len() != args.checkpoints.len() {
        return Err(ValidationError(format!(
            "{} labels for {} checkpoints",
            args.labels.len(),
            args.checkpoints.len()
        ))
        .into());
    }
    let mut rows: Vec<(String, PairReport)> = Vec::new();
    for (i, path) in args.checkpoints.iter().enumerate() {
        let state = load(path, args.resolution)?;
        let report = evaluate_pairs(&state.gen, args.n_latents, args.seed)?;
        let label = args
            .labels
            .get(i)
            .cloned()
            .unwrap_or_else(|| default_label(path));
        rows.push((label, report));
    }
    let entries: Vec<(&str, &str, &PairReport)> = rows
        .iter()
        .map(|(l, r)| (l.as_str(), args.class.as_str(), r))
        .collect();
    let table = format_table(&entries);
    print!("{table}");
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let txt = out.with_extension("txt");
        fs::write(&txt, &table).with_context(|| format!("writing {}", txt.display()))?;
        let jsonl = out.with_extension("jsonl");
        let records: String = rows
            .iter()
            .map(|(l, r)| r.to_jsonl(l, &args.class))
            .collect();
        fs::write(&jsonl, records).with_context(|| format!("writing {}", jsonl.display()))?;
    }
    Ok(())
}

pub fn export(args: &ExportArgs) -> Result<()> {
    let grid: Grid32 = read_grid(&args.grid)?;
    if args.obj.is_none() && args.binvox.is_none() {
        return Err(ValidationError("nothing to do: pass --obj and/or --binvox".into()).into());
    }
    if let Some(path) = &args.obj {
        let (text, stats) = obj::to_obj(&grid, args.threshold);
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        println!(
            "{}: {} cubes, {} vertices, {} faces",
            path.display(),
            stats.cubes,
            stats.vertices,
            stats.faces
        );
    }
    if let Some(path) = &args.binvox {
        let binary = pairvox::voxel::binarize(&grid, args.threshold);
        fs::write(path, binvox::encode(&binary, &BinvoxHeader::default()))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
