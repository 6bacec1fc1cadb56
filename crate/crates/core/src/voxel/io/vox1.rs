//! `VOX1`: magic, little-endian `u32` dims, a payload flag byte, then either
//! bit-packed occupancy (flag 0) or `f32` values (flag 1), both x-fastest.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::voxel::VoxelGrid;

pub const MAGIC: &[u8; 4] = b"VOX1";
const HEADER_LEN: usize = 4 + 12 + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Payload {
    /// One bit per cell, least significant bit first. Cells above 0.5 are set.
    Bits,
    Float,
}

impl Payload {
    /// Bit-packed when the grid is exactly binary, float otherwise.
    pub fn auto<T: Scalar>(grid: &VoxelGrid<T>) -> Self {
        if grid.is_binary() {
            Payload::Bits
        } else {
            Payload::Float
        }
    }
}

pub fn encode<T: Scalar>(grid: &VoxelGrid<T>, payload: Payload) -> Vec<u8> {
    let r = grid.resolution() as u32;
    let mut out = Vec::with_capacity(HEADER_LEN + grid.len() * 4);
    out.extend_from_slice(MAGIC);
    for _ in 0..3 {
        out.extend_from_slice(&r.to_le_bytes());
    }
    let half = T::from_f64_lossy(0.5);
    match payload {
        Payload::Bits => {
            out.push(0);
            let mut bytes = vec![0u8; grid.len().div_ceil(8)];
            for (i, v) in grid.values().iter().enumerate() {
                if *v > half {
                    bytes[i / 8] |= 1 << (i % 8);
                }
            }
            out.extend_from_slice(&bytes);
        }
        Payload::Float => {
            out.push(1);
            for v in grid.values() {
                out.extend_from_slice(&(v.to_f32().unwrap_or(0.0)).to_le_bytes());
            }
        }
    }
    out
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<VoxelGrid<T>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format(0, "missing VOX1 magic"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len(), "truncated VOX1 header"));
    }
    let dim = |i: usize| {
        let at = 4 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
    };
    let (dx, dy, dz) = (dim(0), dim(1), dim(2));
    if dx != dy || dy != dz {
        return Err(Error::format(4, format!("non-cubic dims {dx}x{dy}x{dz}")));
    }
    if dx == 0 {
        return Err(Error::format(4, "zero dimension"));
    }
    let count = dx
        .checked_mul(dy)
        .and_then(|v| v.checked_mul(dz))
        .filter(|c| *c <= (1 << 31))
        .ok_or_else(|| Error::format(4, format!("dims {dx}x{dy}x{dz} overflow")))?;
    let flag = bytes[16];
    let data = &bytes[HEADER_LEN..];
    let values: Vec<T> = match flag {
        0 => {
            let need = count.div_ceil(8);
            if data.len() < need {
                return Err(Error::format(
                    HEADER_LEN + data.len(),
                    format!(
                        "truncated bit payload: need {need} bytes, have {}",
                        data.len()
                    ),
                ));
            }
            (0..count)
                .map(|i| {
                    if data[i / 8] >> (i % 8) & 1 == 1 {
                        T::one()
                    } else {
                        T::zero()
                    }
                })
                .collect()
        }
        1 => {
            let need = count * 4;
            if data.len() < need {
                return Err(Error::format(
                    HEADER_LEN + data.len(),
                    format!(
                        "truncated float payload: need {need} bytes, have {}",
                        data.len()
                    ),
                ));
            }
            let mut values = Vec::with_capacity(count);
            for (i, chunk) in data[..need].chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes(chunk.try_into().unwrap());
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::format(
                        HEADER_LEN + 4 * i,
                        format!("value {v} outside [0, 1]"),
                    ));
                }
                values.push(T::from_f32(v).unwrap());
            }
            values
        }
        other => {
            return Err(Error::format(16, format!("unknown payload flag {other}")));
        }
    };
    Ok(VoxelGrid::from_values_unchecked(dx, values))
}
