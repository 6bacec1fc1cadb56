//! Conditioned voxel samples: loading orientation subsets from disk, pairing
//! variants, seeded batching and a synthetic chair-like dataset.
//!
//! On disk a class lives at `<root>/<class>/<object_id>/O<k>.{vox1|binvox}`,
//! with `k` in `1..=12` indexing 30 degree steps about the vertical axis.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::voxel::{self, io, Condition, VoxelGrid};

pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedSample<T: Scalar = f32> {
    pub grid: VoxelGrid<T>,
    pub condition: Condition,
    /// Identifies the underlying object across conditions.
    pub source_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingMode {
    /// Every object contributes every condition.
    Paired,
    /// Per-condition object orders shuffled independently.
    Unpaired,
    /// Disjoint object subsets feed different conditions.
    SplitHalf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub class_name: String,
    pub resolution: usize,
    pub n_conditions: usize,
    pub pairing_mode: PairingMode,
    pub root_path: PathBuf,
    pub seed: u64,
    /// Generate this many synthetic objects instead of reading `root_path`.
    pub synthetic: Option<usize>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            class_name: "chair".into(),
            resolution: 32,
            n_conditions: 2,
            pairing_mode: PairingMode::Paired,
            root_path: PathBuf::from("data"),
            seed: 0,
            synthetic: None,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        Condition::check_count(self.n_conditions)
            .map_err(|e| Error::config("dataset.n_conditions", e.to_string()))?;
        if self.resolution < 4 {
            return Err(Error::config("dataset.resolution", "must be at least 4"));
        }
        Ok(())
    }

    pub fn class_dir(&self) -> PathBuf {
        self.root_path.join(&self.class_name)
    }
}

/// Dataset orientation (`O1`..`O12`) holding a condition's rotation.
pub fn orientation_of(condition: Condition) -> usize {
    1 + condition.angle_deg() as usize / 30
}

fn find_orientation_file(dir: &Path, orientation: usize) -> Option<PathBuf> {
    ["vox1", "binvox"]
        .iter()
        .map(|ext| dir.join(format!("O{orientation}.{ext}")))
        .find(|p| p.is_file())
}

/// Object directories of a class in sorted order.
pub fn scan_objects(class_dir: &Path) -> Result<Vec<String>> {
    let entries = match fs::read_dir(class_dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(class_dir, e)),
    };
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(class_dir, e))?;
        if entry.path().is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn write_manifest(class_dir: &Path, ids: &[String]) -> Result<()> {
    let path = class_dir.join(MANIFEST_NAME);
    let mut text = ids.join("\n");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Loads the orientations of every object that map onto the requested
/// conditions. Objects missing one of them are skipped with a warning.
pub fn load_class<T: Scalar>(spec: &DatasetSpec) -> Result<Vec<ConditionedSample<T>>> {
    spec.validate()?;
    let class_dir = spec.class_dir();
    let ids = scan_objects(&class_dir)?;
    let conditions = Condition::all(spec.n_conditions)?;
    let half: T = cast(voxel::DEFAULT_THRESHOLD);
    let per_object: Vec<Result<Vec<ConditionedSample<T>>>> = ids
        .par_iter()
        .map(|id| {
            let dir = class_dir.join(id);
            let mut files = Vec::with_capacity(conditions.len());
            for c in &conditions {
                match find_orientation_file(&dir, orientation_of(*c)) {
                    Some(p) => files.push((*c, p)),
                    None => {
                        log::warn!(
                            "skipping {id}: no O{} for condition {}",
                            orientation_of(*c),
                            c.index()
                        );
                        return Ok(Vec::new());
                    }
                }
            }
            files
                .into_iter()
                .map(|(condition, path)| {
                    let grid: VoxelGrid<T> = io::read_grid(&path)?;
                    let grid = if grid.resolution() + 2 == spec.resolution {
                        voxel::pad_shell(&grid)
                    } else if grid.resolution() == spec.resolution {
                        grid
                    } else {
                        return Err(Error::contract(format!(
                            "{}: resolution {} does not fit {}",
                            path.display(),
                            grid.resolution(),
                            spec.resolution
                        )));
                    };
                    Ok(ConditionedSample {
                        grid: voxel::binarize(&grid, half),
                        condition,
                        source_id: id.clone(),
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per_object {
        out.extend(r?);
    }
    Ok(out)
}

fn by_condition<T: Scalar>(
    samples: Vec<ConditionedSample<T>>,
) -> BTreeMap<usize, Vec<ConditionedSample<T>>> {
    let mut groups: BTreeMap<usize, Vec<ConditionedSample<T>>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.condition.index()).or_default().push(s);
    }
    groups
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn apply_pairing<T: Scalar>(
    samples: Vec<ConditionedSample<T>>,
    mode: PairingMode,
    seed: u64,
) -> Vec<ConditionedSample<T>> {
    match mode {
        PairingMode::Paired => {
            let n = samples.first().map_or(0, |s| s.condition.n_conditions());
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for s in &samples {
                *counts.entry(s.source_id.clone()).or_default() += 1;
            }
            samples
                .into_iter()
                .filter(|s| counts[&s.source_id] == n)
                .collect()
        }
        PairingMode::Unpaired => by_condition(samples)
            .into_iter()
            .flat_map(|(c, mut group)| {
                group.shuffle(&mut seeded(seed, 100 + c as u64));
                group
            })
            .collect(),
        PairingMode::SplitHalf => {
            let Some(n) = samples.first().map(|s| s.condition.n_conditions()) else {
                return samples;
            };
            let mut ids: Vec<String> = samples
                .iter()
                .map(|s| s.source_id.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            ids.shuffle(&mut seeded(seed, 200));
            let per = ids.len() / n;
            let owner: BTreeMap<String, usize> = ids
                .into_iter()
                .enumerate()
                .map(|(i, id)| (id, (i / per.max(1)).min(n - 1)))
                .collect();
            samples
                .into_iter()
                .filter(|s| owner[&s.source_id] == s.condition.index())
                .collect()
        }
    }
}

/// Seeded per-epoch batching over `len` items.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Batcher {
    pub len: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Batcher {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::contract("batch_size must be at least 1"));
        }
        Ok(Self {
            len,
            batch_size,
            seed,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }

    /// Item order of `epoch`: a seeded permutation.
    pub fn order(&self, epoch: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len).collect();
        idx.shuffle(&mut seeded(self.seed, epoch));
        idx
    }

    /// Index batches of `epoch`; the last one may be short.
    pub fn epoch(&self, epoch: u64) -> Vec<Vec<usize>> {
        self.order(epoch)
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}

/// Batches of `samples` for one epoch.
pub fn batches<'a, S>(
    samples: &'a [S],
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<impl Iterator<Item = Vec<&'a S>> + 'a> {
    let b = Batcher::new(samples.len(), batch_size, seed)?;
    Ok(b.epoch(epoch)
        .into_iter()
        .map(move |ix| ix.into_iter().map(|i| &samples[i]).collect()))
}

/// A chair-like solid: seat slab, back slab on the `-z` side, and up to two
/// front legs, with randomized placement and proportions.
fn synth_object<T: Scalar>(r: usize, rng: &mut impl Rng) -> VoxelGrid<T> {
    let t = (r / 8).max(1);
    let span = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> usize {
        ((rng.random_range(lo..hi) * r as f64).round() as usize).clamp(2 * t, r)
    };
    let mut local = ChaCha8Rng::from_rng(rng);
    let rng = &mut local;
    let width = span(rng, 0.4, 0.85);
    let depth = span(rng, 0.4, 0.85);
    let x0 = rng.random_range(0..=r - width);
    let z0 = rng.random_range(0..=r - depth);
    let seat_y = rng.random_range(0..=(r / 2));
    let back_top = rng.random_range((seat_y + 2 * t).min(r)..=r);
    let legs = rng.random_range(0..=2usize);
    let mut boxes: Vec<[(usize, usize); 3]> = vec![
        [(x0, x0 + width), (seat_y, seat_y + t), (z0, z0 + depth)],
        [(x0, x0 + width), (seat_y, back_top), (z0, z0 + t)],
    ];
    let front = z0 + depth - t;
    if legs >= 1 && seat_y > 0 {
        boxes.push([(x0, x0 + t), (0, seat_y), (front, front + t)]);
    }
    if legs >= 2 && seat_y > 0 {
        boxes.push([
            (x0 + width - t, x0 + width),
            (0, seat_y),
            (front, front + t),
        ]);
    }
    VoxelGrid::from_fn(r, |x, y, z| {
        let inside = boxes.iter().any(|b| {
            (b[0].0..b[0].1).contains(&x)
                && (b[1].0..b[1].1).contains(&y)
                && (b[2].0..b[2].1).contains(&z)
        });
        if inside {
            T::one()
        } else {
            T::zero()
        }
    })
    .expect("binary values")
}

/// `count` random chair-like objects, each emitted under every condition.
pub fn synth_dataset<T: Scalar>(
    count: usize,
    resolution: usize,
    n_conditions: usize,
    seed: u64,
) -> Result<Vec<ConditionedSample<T>>> {
    if ![8, 16, 32].contains(&resolution) {
        return Err(Error::contract(format!(
            "synthetic resolution must be 8, 16 or 32, got {resolution}"
        )));
    }
    let conditions = Condition::all(n_conditions)?;
    let mut rng = seeded(seed, 300);
    let mut out = Vec::with_capacity(count * n_conditions);
    for i in 0..count {
        let object = loop {
            let g: VoxelGrid<T> = synth_object(resolution, &mut rng);
            if g != voxel::rotate_quarter(&g, 2) && g != voxel::rotate_quarter(&g, 1) {
                break g;
            }
        };
        for c in &conditions {
            out.push(ConditionedSample {
                grid: voxel::rotate_quarter(&object, c.quarter_turns()),
                condition: *c,
                source_id: format!("synth_{i:05}"),
            });
        }
    }
    Ok(out)
}

/// Loads per `spec`, or synthesizes when `spec.synthetic` is set, then pairs.
pub fn prepare<T: Scalar>(spec: &DatasetSpec) -> Result<Vec<ConditionedSample<T>>> {
    spec.validate()?;
    let samples = match spec.synthetic {
        Some(count) => synth_dataset(count, spec.resolution, spec.n_conditions, spec.seed)?,
        None => load_class(spec)?,
    };
    Ok(apply_pairing(samples, spec.pairing_mode, spec.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn orientation_subsets() {
        let two: Vec<usize> = Condition::all(2)
            .unwrap()
            .into_iter()
            .map(orientation_of)
            .collect();
        assert_eq!(two, vec![1, 7]);
        let four: Vec<usize> = Condition::all(4)
            .unwrap()
            .into_iter()
            .map(orientation_of)
            .collect();
        assert_eq!(four, vec![1, 4, 7, 10]);
    }

    #[test]
    fn synthetic_objects_are_asymmetric_and_rotated_per_condition() {
        let s: Vec<ConditionedSample<f32>> = synth_dataset(200, 16, 2, 1).unwrap();
        assert_eq!(s.len(), 400);
        for pair in s.chunks(2) {
            let g = &pair[0].grid;
            assert_ne!(*g, voxel::rotate_quarter(g, 2));
            assert!(g.is_binary() && g.occupied(0.5) > 0);
            assert_eq!(pair[1].grid, voxel::rotate_quarter(g, 2));
            assert_eq!(pair[0].source_id, pair[1].source_id);
        }
        let again: Vec<ConditionedSample<f32>> = synth_dataset(200, 16, 2, 1).unwrap();
        assert_eq!(s, again);
        let four: Vec<ConditionedSample<f32>> = synth_dataset(5, 8, 4, 2).unwrap();
        for group in four.chunks(4) {
            for (k, s) in group.iter().enumerate() {
                assert_eq!(s.grid, voxel::rotate_quarter(&group[0].grid, k as i64));
            }
        }
        assert!(synth_dataset::<f32>(1, 12, 2, 0).is_err());
    }

    #[test]
    fn pairing_modes() {
        let s: Vec<ConditionedSample<f32>> = synth_dataset(100, 8, 2, 3).unwrap();
        let paired = apply_pairing(s.clone(), PairingMode::Paired, 0);
        let mut groups: HashMap<&str, usize> = HashMap::new();
        for x in &paired {
            *groups.entry(&x.source_id).or_default() += 1;
        }
        assert!(groups.values().all(|n| *n == 2) && groups.len() == 100);

        let split = apply_pairing(s.clone(), PairingMode::SplitHalf, 5);
        let ids = |c: usize| -> BTreeSet<&str> {
            split
                .iter()
                .filter(|x| x.condition.index() == c)
                .map(|x| x.source_id.as_str())
                .collect()
        };
        assert_eq!(ids(0).len(), 50);
        assert_eq!(ids(1).len(), 50);
        assert!(ids(0).is_disjoint(&ids(1)));

        let u1 = apply_pairing(s.clone(), PairingMode::Unpaired, 9);
        let u2 = apply_pairing(s.clone(), PairingMode::Unpaired, 9);
        assert_eq!(u1, u2);
        assert_eq!(u1.len(), 200);
        let c0: Vec<&str> = u1
            .iter()
            .filter(|x| x.condition.index() == 0)
            .map(|x| x.source_id.as_str())
            .collect();
        let c1: Vec<&str> = u1
            .iter()
            .filter(|x| x.condition.index() == 1)
            .map(|x| x.source_id.as_str())
            .collect();
        assert_ne!(c0, c1);
    }

    #[test]
    fn batching() {
        let items: Vec<usize> = (0..989).collect();
        let b: Vec<Vec<&usize>> = batches(&items, 128, 4, 0).unwrap().collect();
        assert_eq!(b.len(), 8);
        assert_eq!(b[7].len(), 93);
        let again: Vec<Vec<&usize>> = batches(&items, 128, 4, 0).unwrap().collect();
        assert_eq!(b, again);
        let other: Vec<Vec<&usize>> = batches(&items, 128, 4, 1).unwrap().collect();
        assert_ne!(b, other);
        let mut seen: Vec<usize> = b.iter().flatten().map(|v| **v).collect();
        seen.sort();
        assert_eq!(seen, items);
        assert_eq!(batches(&items, 5000, 0, 0).unwrap().count(), 1);
        assert!(batches(&items, 0, 0, 0).is_err());
    }

    #[test]
    fn empty_directory_loads_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            root_path: dir.path().into(),
            ..DatasetSpec::default()
        };
        assert!(load_class::<f32>(&spec).unwrap().is_empty());
    }

    #[test]
    fn loads_only_mapped_orientations_and_pads() {
        let dir = tempfile::tempdir().unwrap();
        let class = dir.path().join("chair");
        for obj in ["a", "b", "c"] {
            fs::create_dir_all(class.join(obj)).unwrap();
            for k in 1..=12 {
                if obj == "c" && k == 7 {
                    continue;
                }
                let mut g = VoxelGrid::<f32>::zeros(6);
                g.set(k % 6, 0, 0, 1.0);
                let ext = if k % 2 == 0 { "vox1" } else { "binvox" };
                io::write_grid(&g, class.join(obj).join(format!("O{k}.{ext}"))).unwrap();
            }
        }
        let spec = DatasetSpec {
            root_path: dir.path().into(),
            resolution: 8,
            ..DatasetSpec::default()
        };
        let s: Vec<ConditionedSample<f32>> = load_class(&spec).unwrap();
        assert_eq!(s.len(), 4);
        for x in &s {
            assert_eq!(x.grid.resolution(), 8);
            let k = orientation_of(x.condition);
            assert!(k == 1 || k == 7);
            assert_eq!(x.grid.get(k % 6 + 1, 1, 1), 1.0);
            assert!(x.grid.is_binary());
        }
    }
}
