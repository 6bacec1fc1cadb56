use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;

use pairvox::dataset::{orientation_of, write_manifest};
use pairvox::voxel::io::{read_grid, vox1, Payload};
use pairvox::voxel::{binarize, pad_shell, DEFAULT_THRESHOLD};
use pairvox::{Condition, Grid32};

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Source root holding one directory per class. Objects are either
    /// directories of `O<k>.{binvox,vox1}` files or flat `<object>_O<k>.<ext>` files.
    pub src: PathBuf,
    /// Destination dataset root.
    pub dst: PathBuf,
    /// Only ingest this class.
    #[arg(long)]
    pub class: Option<String>,
    /// Keep only the orientations used by this many conditions (2 or 4).
    /// Without it all orientations are kept.
    #[arg(long)]
    pub n_conditions: Option<usize>,
    /// Grid edge after ingestion; grids two cells smaller get a one-cell shell.
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    /// Skip unreadable files instead of failing.
    #[arg(long)]
    pub skip_bad: bool,
}

/// Splits `O7` / `chair_0001_O7` style stems into object id and orientation.
fn parse_stem(stem: &str) -> Option<(Option<&str>, usize)> {
    let (object, tag) = match stem.rfind("_O") {
        Some(i) => (Some(&stem[..i]), &stem[i + 1..]),
        None => (None, stem),
    };
    let k: usize = tag.strip_prefix('O')?.parse().ok()?;
    (1..=12).contains(&k).then_some((object, k))
}

fn is_grid_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("binvox" | "vox1")
    )
}

/// `object -> orientation -> file` for one class directory.
fn collect_class(dir: &Path) -> Result<BTreeMap<String, BTreeMap<usize, PathBuf>>> {
    let mut objects: BTreeMap<String, BTreeMap<usize, PathBuf>> = BTreeMap::new();
    let mut add = |object: String, path: PathBuf| {
        if let Some((_, k)) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(parse_stem)
        {
            objects.entry(object).or_default().insert(k, path);
        }
    };
    for entry in sorted_entries(dir)? {
        if entry.is_dir() {
            let object = file_name(&entry);
            for f in sorted_entries(&entry)? {
                if f.is_file() && is_grid_file(&f) {
                    add(object.clone(), f);
                }
            }
        } else if is_grid_file(&entry) {
            let stem = entry.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            if let Some((Some(object), _)) = parse_stem(stem) {
                add(object.to_string(), entry.clone());
            }
        }
    }
    Ok(objects)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        out.push(entry?.path());
    }
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn load(path: &Path, resolution: usize) -> pairvox::Result<Grid32> {
    let grid: Grid32 = read_grid(path)?;
    let grid = if grid.resolution() + 2 == resolution {
        pad_shell(&grid)
    } else if grid.resolution() == resolution {
        grid
    } else {
        return Err(pairvox::Error::Contract(format!(
            "resolution {} does not fit target {resolution}",
            grid.resolution()
        )));
    };
    Ok(binarize(&grid, DEFAULT_THRESHOLD as f32))
}

#[derive(Default, Debug)]
struct Summary {
    classes: usize,
    objects: usize,
    written: usize,
    incomplete: usize,
    bad: Vec<String>,
}

pub fn run(args: &IngestArgs) -> Result<()> {
    let wanted: Option<Vec<usize>> = match args.n_conditions {
        Some(n) => Some(Condition::all(n)?.into_iter().map(orientation_of).collect()),
        None => None,
    };
    let mut summary = Summary::default();
    let classes: Vec<PathBuf> = sorted_entries(&args.src)?
        .into_iter()
        .filter(|p| p.is_dir())
        .filter(|p| args.class.as_ref().is_none_or(|c| file_name(p) == *c))
        .collect();
    if classes.is_empty() {
        log::warn!("no class directories under {}", args.src.display());
    }
    for class_dir in classes {
        let class = file_name(&class_dir);
        let out_class = args.dst.join(&class);
        let mut kept_ids = Vec::new();
        for (object, files) in collect_class(&class_dir)? {
            let orientations: Vec<usize> = match &wanted {
                Some(w) => w.clone(),
                None => files.keys().copied().collect(),
            };
            if let Some(missing) = orientations.iter().find(|k| !files.contains_key(k)) {
                log::warn!("{class}/{object}: missing O{missing}, skipped");
                summary.incomplete += 1;
                continue;
            }
            let mut grids = Vec::with_capacity(orientations.len());
            let mut ok = true;
            for k in &orientations {
                let path = &files[k];
                match load(path, args.resolution) {
                    Ok(g) => grids.push((*k, g)),
                    Err(e) if args.skip_bad => {
                        log::warn!("{}: {e}", path.display());
                        summary.bad.push(format!("{}: {e}", path.display()));
                        ok = false;
                        break;
                    }
                    Err(e) => {
                        return Err(anyhow::Error::new(e).context(format!("{}", path.display())))
                    }
                }
            }
            if !ok {
                continue;
            }
            let out_dir = out_class.join(&object);
            fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            for (k, g) in grids {
                let path = out_dir.join(format!("O{k}.vox1"));
                fs::write(&path, vox1::encode(&g, Payload::Bits))
                    .with_context(|| format!("writing {}", path.display()))?;
                summary.written += 1;
            }
            kept_ids.push(object);
        }
        if !kept_ids.is_empty() {
            write_manifest(&out_class, &kept_ids)?;
        }
        summary.classes += 1;
        summary.objects += kept_ids.len();
    }
    if summary.written == 0 {
        log::warn!("ingest produced an empty dataset");
    }
    println!(
        "classes {}  objects {}  files {}  incomplete {}  bad {}",
        summary.classes,
        summary.objects,
        summary.written,
        summary.incomplete,
        summary.bad.len()
    );
    for b in &summary.bad {
        println!("bad: {b}");
    }
    Ok(())
}
