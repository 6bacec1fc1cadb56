use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::grid::{Condition, VoxelGrid};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Rotates an x-fastest `r`-cube held in `src` by `k` counter-clockwise
/// quarter turns about the vertical (`y`) axis, writing into `dst`.
///
/// One quarter turn sends cell `(x, y, z)` to `(z, y, r - 1 - x)`, which is
/// the rotation matrix applied to voxel centers about the grid center.
pub fn rotate_quarter_into<T: Copy>(src: &[T], dst: &mut [T], r: usize, k: i64) {
    let n = r * r * r;
    assert_eq!(src.len(), n, "source is not an {r}-cube");
    assert_eq!(dst.len(), n, "destination is not an {r}-cube");
    let k = k.rem_euclid(4);
    let last = r - 1;
    for z in 0..r {
        for y in 0..r {
            let row = r * (y + r * z);
            for x in 0..r {
                let (nx, nz) = match k {
                    0 => (x, z),
                    1 => (z, last - x),
                    2 => (last - x, last - z),
                    _ => (last - z, x),
                };
                dst[nx + r * (y + r * nz)] = src[row + x];
            }
        }
    }
}

pub fn rotate_quarter<T: Scalar>(grid: &VoxelGrid<T>, k: i64) -> VoxelGrid<T> {
    let r = grid.resolution();
    let mut out = vec![T::zero(); grid.len()];
    rotate_quarter_into(grid.values(), &mut out, r, k);
    VoxelGrid::from_values_unchecked(r, out)
}

/// Expresses every sample in the condition-0 frame by undoing its condition
/// rotation.
pub fn align<T: Scalar>(
    samples: &[VoxelGrid<T>],
    conditions: &[Condition],
) -> Result<Vec<VoxelGrid<T>>> {
    if samples.len() != conditions.len() {
        return Err(Error::contract(format!(
            "align got {} samples but {} conditions",
            samples.len(),
            conditions.len()
        )));
    }
    Ok(samples
        .iter()
        .zip(conditions)
        .map(|(s, c)| rotate_quarter(s, -c.quarter_turns()))
        .collect())
}

/// Cell-wise mean of `inputs` written to `out`.
///
/// Each cell's values are summed in sorted order and the mean is clamped to
/// the cell's input range, so the result does not depend on argument order
/// and equal inputs merge to themselves exactly.
pub fn merge_into<T: Scalar>(inputs: &[&[T]], out: &mut [T]) {
    assert!(!inputs.is_empty(), "merge of nothing");
    let n = inputs.len();
    assert!(
        inputs.iter().all(|s| s.len() == out.len()),
        "merge length mismatch"
    );
    let scale = T::from_usize(n).unwrap();
    let mut cell = Vec::with_capacity(n);
    for (i, o) in out.iter_mut().enumerate() {
        cell.clear();
        cell.extend(inputs.iter().map(|s| s[i]));
        cell.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let sum = cell.iter().fold(T::zero(), |acc, v| acc + *v);
        let mean = sum / scale;
        *o = mean.max(cell[0]).min(cell[n - 1]);
    }
}

pub fn merge<T: Scalar>(aligned: &[VoxelGrid<T>]) -> Result<VoxelGrid<T>> {
    let first = aligned
        .first()
        .ok_or_else(|| Error::contract("merge needs at least one grid"))?;
    let r = first.resolution();
    if let Some(bad) = aligned.iter().find(|g| g.resolution() != r) {
        return Err(Error::contract(format!(
            "merge resolution mismatch: {r} vs {}",
            bad.resolution()
        )));
    }
    let inputs: Vec<&[T]> = aligned.iter().map(|g| g.values()).collect();
    let mut out = vec![T::zero(); first.len()];
    merge_into(&inputs, &mut out);
    Ok(VoxelGrid::from_values_unchecked(r, out))
}

/// Cells strictly above `threshold` become 1, the rest 0.
pub fn binarize<T: Scalar>(grid: &VoxelGrid<T>, threshold: T) -> VoxelGrid<T> {
    let values = grid
        .values()
        .iter()
        .map(|v| if *v > threshold { T::one() } else { T::zero() })
        .collect();
    VoxelGrid::from_values_unchecked(grid.resolution(), values)
}

/// Surrounds the grid with a one-voxel shell of zeros.
pub fn pad_shell<T: Scalar>(grid: &VoxelGrid<T>) -> VoxelGrid<T> {
    let r = grid.resolution();
    let p = r + 2;
    let mut out = vec![T::zero(); p * p * p];
    for z in 0..r {
        for y in 0..r {
            let src = grid.index(0, y, z);
            let dst = 1 + p * (y + 1 + p * (z + 1));
            out[dst..dst + r].copy_from_slice(&grid.values()[src..src + r]);
        }
    }
    VoxelGrid::from_values_unchecked(p, out)
}

/// Pads a `(target - 2)`-cube to `target` with a zero shell.
pub fn pad_to_target<T: Scalar>(grid: &VoxelGrid<T>, target: usize) -> Result<VoxelGrid<T>> {
    if grid.resolution() + 2 != target {
        return Err(Error::contract(format!(
            "padding to {target} needs a {}-cube, got {}",
            target.saturating_sub(2),
            grid.resolution()
        )));
    }
    Ok(pad_shell(grid))
}
