//! Voxel grids, exact quarter-turn rotations, the merge operator and grid codecs.

mod grid;
pub mod io;
mod ops;

pub use grid::{Condition, VoxelGrid};
pub use ops::{
    align, binarize, merge, merge_into, pad_shell, pad_to_target, rotate_quarter,
    rotate_quarter_into, DEFAULT_THRESHOLD,
};
