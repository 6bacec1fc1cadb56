//! Pair-consistency metrics for samples generated from one latent vector
//! under every condition: the average absolute difference (AAD) from the
//! merged grid and the average voxel agreement ratio (AVAR).

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GeneratorParams, LatentVector, Mode};
use crate::scalar::Scalar;
use crate::training::expand_pairs;
use crate::voxel::{align, binarize, merge, Condition, VoxelGrid, DEFAULT_THRESHOLD};

/// Latents pushed through the generator at once during evaluation.
const EVAL_CHUNK: usize = 16;

fn check_tuple<T: Scalar>(samples: &[VoxelGrid<T>], conditions: &[Condition]) -> Result<()> {
    if samples.len() != conditions.len() {
        return Err(Error::contract(format!(
            "{} samples but {} conditions",
            samples.len(),
            conditions.len()
        )));
    }
    if !Condition::is_complete_set(conditions) {
        return Err(Error::contract(
            "metrics need exactly one sample per condition of a complete set",
        ));
    }
    Ok(())
}

fn aligned_and_merged<T: Scalar>(
    samples: &[VoxelGrid<T>],
    conditions: &[Condition],
) -> Result<(Vec<VoxelGrid<T>>, VoxelGrid<T>)> {
    check_tuple(samples, conditions)?;
    let aligned = align(samples, conditions)?;
    let merged = merge(&aligned)?;
    Ok((aligned, merged))
}

/// Mean over samples of the per-cell mean `|S_i - M|`, with `S_i` aligned to
/// the condition-0 frame and `M` their merge.
pub fn aad<T: Scalar>(samples: &[VoxelGrid<T>], conditions: &[Condition]) -> Result<f64> {
    let (aligned, merged) = aligned_and_merged(samples, conditions)?;
    Ok(aad_of(&aligned, &merged))
}

fn aad_of<T: Scalar>(aligned: &[VoxelGrid<T>], merged: &VoxelGrid<T>) -> f64 {
    let cells = merged.len() as f64;
    let per_sample: Vec<f64> = aligned
        .iter()
        .map(|s| {
            s.values()
                .iter()
                .zip(merged.values())
                .map(|(a, m)| (a.to_f64_lossy() - m.to_f64_lossy()).abs())
                .sum::<f64>()
                / cells
        })
        .collect();
    order_free_mean(per_sample)
}

/// Mean of `values` summed in sorted order, so it does not depend on the
/// order the samples were given in.
fn order_free_mean(mut values: Vec<f64>) -> f64 {
    let n = values.len() as f64;
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / n
}

/// AVAR of one tuple together with the number of samples that were empty
/// after binarization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Agreement {
    pub avar: f64,
    pub degenerate: usize,
}

/// Mean over samples of `|S_i ∧ M| / |S_i|` after binarizing the aligned
/// samples and their merge at 0.5. An empty sample scores 0.
pub fn avar<T: Scalar>(samples: &[VoxelGrid<T>], conditions: &[Condition]) -> Result<f64> {
    agreement(samples, conditions).map(|a| a.avar)
}

pub fn agreement<T: Scalar>(
    samples: &[VoxelGrid<T>],
    conditions: &[Condition],
) -> Result<Agreement> {
    let (aligned, merged) = aligned_and_merged(samples, conditions)?;
    Ok(agreement_of(&aligned, &merged))
}

fn agreement_of<T: Scalar>(aligned: &[VoxelGrid<T>], merged: &VoxelGrid<T>) -> Agreement {
    let t = T::from_f64_lossy(DEFAULT_THRESHOLD);
    let mb = binarize(merged, t);
    let mut degenerate = 0;
    let mut ratios = Vec::with_capacity(aligned.len());
    for s in aligned {
        let sb = binarize(s, t);
        let occupied = sb.values().iter().filter(|v| **v > T::zero()).count();
        if occupied == 0 {
            degenerate += 1;
            ratios.push(0.0);
            continue;
        }
        let both = sb
            .values()
            .iter()
            .zip(mb.values())
            .filter(|(a, m)| **a > T::zero() && **m > T::zero())
            .count();
        ratios.push(both as f64 / occupied as f64);
    }
    Agreement {
        avar: order_free_mean(ratios),
        degenerate,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub aad: Vec<f64>,
    pub avar: Vec<f64>,
    pub batch_aad: f64,
    pub batch_avar: f64,
    pub n_conditions: usize,
    /// Latents with at least one empty binarized sample.
    pub degenerate_count: usize,
}

impl PairReport {
    /// Aggregates per-latent `(aad, agreement)` values.
    pub fn from_parts(n_conditions: usize, parts: &[(f64, Agreement)]) -> Self {
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let aad: Vec<f64> = parts.iter().map(|p| p.0).collect();
        let avar: Vec<f64> = parts.iter().map(|p| p.1.avar).collect();
        Self {
            batch_aad: mean(&aad),
            batch_avar: mean(&avar),
            degenerate_count: parts.iter().filter(|p| p.1.degenerate > 0).count(),
            aad,
            avar,
            n_conditions,
        }
    }

    pub fn n_latents(&self) -> usize {
        self.aad.len()
    }

    /// One JSON object per latent followed by a summary object.
    pub fn to_jsonl(&self, method: &str, class: &str) -> String {
        let mut out = String::new();
        for (i, (a, v)) in self.aad.iter().zip(&self.avar).enumerate() {
            let rec = serde_json::json!({
                "record": "latent",
                "method": method,
                "class": class,
                "latent": i,
                "aad": a,
                "avar": v,
            });
            let _ = writeln!(out, "{rec}");
        }
        let rec = serde_json::json!({
            "record": "batch",
            "method": method,
            "class": class,
            "n_latents": self.n_latents(),
            "n_conditions": self.n_conditions,
            "batch_aad": self.batch_aad,
            "batch_avar": self.batch_avar,
            "degenerate_count": self.degenerate_count,
        });
        let _ = writeln!(out, "{rec}");
        out
    }
}

/// A table with one row per method and AAD/AVAR columns per class.
pub fn format_table(entries: &[(&str, &str, &PairReport)]) -> String {
    let mut classes: Vec<&str> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for (m, c, _) in entries {
        if !methods.contains(m) {
            methods.push(m);
        }
        if !classes.contains(c) {
            classes.push(c);
        }
    }
    let width = methods.iter().map(|m| m.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:width$}", "method");
    for c in &classes {
        let _ = write!(
            out,
            "  {:>10}  {:>10}",
            format!("{c} AAD"),
            format!("{c} AVAR")
        );
    }
    out.push('\n');
    for m in &methods {
        let _ = write!(out, "{m:width$}");
        for c in &classes {
            match entries.iter().find(|(em, ec, _)| em == m && ec == c) {
                Some((_, _, r)) => {
                    let _ = write!(out, "  {:>10.4}  {:>10.4}", r.batch_aad, r.batch_avar);
                }
                None => {
                    let _ = write!(out, "  {:>10}  {:>10}", "-", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Generates every condition from each of `n_latents` shared latents and
/// scores each tuple. The generator runs in inference mode, so each latent's
/// samples do not depend on the rest of the batch.
pub fn evaluate<T: Scalar>(
    gen: &GeneratorParams<T>,
    n_latents: usize,
    seed: u64,
) -> Result<PairReport> {
    evaluate_in(gen, n_latents, seed, Mode::Eval)
}

pub fn evaluate_in<T: Scalar>(
    gen: &GeneratorParams<T>,
    n_latents: usize,
    seed: u64,
    mode: Mode,
) -> Result<PairReport> {
    let cfg = &gen.config;
    let conditions = Condition::all(cfg.n_conditions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zs: Vec<LatentVector<T>> = (0..n_latents)
        .map(|_| LatentVector::sample(cfg.latent_dim, cfg.latent_prior, &mut rng))
        .collect();
    let r = cfg.resolution;
    let cells = cfg.cells();
    let mut parts = Vec::with_capacity(n_latents);
    for chunk in zs.chunks(EVAL_CHUNK) {
        let (rows, row_conds) = expand_pairs(chunk, &conditions);
        let out = gen.forward(&rows, &row_conds, mode)?.into_output();
        let scored: Vec<(f64, Agreement)> = out
            .par_chunks(cells * conditions.len())
            .map(|tuple| {
                let grids: Vec<VoxelGrid<T>> = tuple
                    .chunks(cells)
                    .map(|v| VoxelGrid::from_values_unchecked(r, v.to_vec()))
                    .collect();
                let aligned = align(&grids, &conditions).expect("lengths match");
                let merged = merge(&aligned).expect("non-empty tuple");
                (aad_of(&aligned, &merged), agreement_of(&aligned, &merged))
            })
            .collect();
        parts.extend(scored);
    }
    Ok(PairReport::from_parts(conditions.len(), &parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conds(n: usize) -> Vec<Condition> {
        Condition::all(n).unwrap()
    }

    #[test]
    fn ones_against_zeros() {
        let s = vec![VoxelGrid::<f32>::filled(4, 1.0), VoxelGrid::zeros(4)];
        assert!((aad(&s, &conds(2)).unwrap() - 0.5).abs() < 1e-12);
        let a = agreement(&s, &conds(2)).unwrap();
        assert_eq!(a.avar, 0.0);
        assert_eq!(a.degenerate, 1);
    }

    #[test]
    fn identical_aligned_samples() {
        let g =
            VoxelGrid::<f64>::from_fn(6, |x, y, z| f64::from(u8::from(x + 2 * y < z + 3))).unwrap();
        let c = conds(4);
        let samples: Vec<_> = c
            .iter()
            .map(|c| crate::voxel::rotate_quarter(&g, c.quarter_turns()))
            .collect();
        assert_eq!(aad(&samples, &c).unwrap(), 0.0);
        assert_eq!(avar(&samples, &c).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_pair_has_no_agreement() {
        let a = VoxelGrid::<f32>::from_fn(4, |x, _, _| if x < 2 { 1.0 } else { 0.0 }).unwrap();
        let b = VoxelGrid::<f32>::from_fn(4, |x, _, _| if x >= 2 { 1.0 } else { 0.0 }).unwrap();
        let c = [Condition::new(0, 2).unwrap(), Condition::new(1, 2).unwrap()];
        // b is given in the condition-1 frame; align undoes that rotation.
        let b_rot = crate::voxel::rotate_quarter(&b, c[1].quarter_turns());
        let a_agree = agreement(&[a, b_rot], &c).unwrap();
        assert_eq!(a_agree.avar, 0.0);
        assert_eq!(a_agree.degenerate, 0);
    }

    #[test]
    fn incomplete_sets_are_rejected() {
        let g = VoxelGrid::<f32>::zeros(4);
        let c0 = Condition::new(0, 2).unwrap();
        assert!(aad(&[g.clone(), g.clone()], &[c0, c0]).is_err());
        assert!(avar(std::slice::from_ref(&g), &[c0]).is_err());
    }

    #[test]
    fn table_and_records() {
        let r = PairReport::from_parts(
            2,
            &[
                (
                    0.1,
                    Agreement {
                        avar: 0.5,
                        degenerate: 0,
                    },
                ),
                (
                    0.3,
                    Agreement {
                        avar: 1.0,
                        degenerate: 1,
                    },
                ),
            ],
        );
        assert!((r.batch_aad - 0.2).abs() < 1e-12);
        assert_eq!(r.batch_avar, 0.75);
        assert_eq!(r.degenerate_count, 1);
        let t = format_table(&[("baseline", "chair", &r), ("paired", "chair", &r)]);
        assert_eq!(t.lines().count(), 3);
        assert!(t.contains("chair AVAR"));
        let lines: Vec<serde_json::Value> = r
            .to_jsonl("paired", "chair")
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2]["batch_avar"], 0.75);
    }
}
