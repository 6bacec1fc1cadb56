//! Grid codecs: the native VOX1 container, binvox import/export and OBJ export.

pub mod binvox;
pub mod obj;
pub mod vox1;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::VoxelGrid;

pub use binvox::BinvoxHeader;
pub use vox1::Payload;

/// Decodes a grid, detecting the format from the leading bytes.
pub fn decode_grid<T: Scalar>(bytes: &[u8]) -> Result<VoxelGrid<T>> {
    if bytes.starts_with(vox1::MAGIC) {
        vox1::decode(bytes)
    } else if bytes.starts_with(b"#binvox") {
        binvox::decode(bytes).map(|(g, _)| g)
    } else {
        Err(Error::format(0, "unrecognized grid file magic"))
    }
}

pub fn read_grid<T: Scalar>(path: impl AsRef<Path>) -> Result<VoxelGrid<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grid(&bytes)
}

/// Writes binvox for a `.binvox` extension and VOX1 otherwise.
pub fn write_grid<T: Scalar>(grid: &VoxelGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if path.extension().is_some_and(|e| e == "binvox") {
        binvox::encode(grid, &BinvoxHeader::default())
    } else {
        vox1::encode(grid, vox1::Payload::auto(grid))
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
