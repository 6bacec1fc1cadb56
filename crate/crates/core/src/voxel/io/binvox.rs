//! binvox: ASCII header followed by `(value, count)` run-length pairs in
//! y-fastest, then z, then x scan order.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::voxel::VoxelGrid;

/// Header fields that the pipeline ignores but export preserves.
#[derive(Clone, Debug, PartialEq)]
pub struct BinvoxHeader {
    pub translate: [f64; 3],
    pub scale: f64,
}

impl Default for BinvoxHeader {
    fn default() -> Self {
        Self {
            translate: [0.0; 3],
            scale: 1.0,
        }
    }
}

#[inline]
fn scan_to_cell(i: usize, r: usize) -> (usize, usize, usize) {
    let y = i % r;
    let z = (i / r) % r;
    let x = i / (r * r);
    (x, y, z)
}

/// Occupancy is `value > 0.5`.
pub fn encode<T: Scalar>(grid: &VoxelGrid<T>, header: &BinvoxHeader) -> Vec<u8> {
    let r = grid.resolution();
    let [tx, ty, tz] = header.translate;
    let mut out = format!(
        "#binvox 1\ndim {r} {r} {r}\ntranslate {tx} {ty} {tz}\nscale {}\ndata\n",
        header.scale
    )
    .into_bytes();
    let half = T::from_f64_lossy(0.5);
    let mut run: Option<(u8, u8)> = None;
    for i in 0..grid.len() {
        let (x, y, z) = scan_to_cell(i, r);
        let v = u8::from(grid.get(x, y, z) > half);
        run = match run {
            Some((rv, n)) if rv == v && n < u8::MAX => Some((rv, n + 1)),
            Some((rv, n)) => {
                out.extend_from_slice(&[rv, n]);
                Some((v, 1))
            }
            None => Some((v, 1)),
        };
    }
    if let Some((rv, n)) = run {
        out.extend_from_slice(&[rv, n]);
    }
    out
}

fn parse_floats(tokens: &[&str], offset: usize, want: usize) -> Result<Vec<f64>> {
    if tokens.len() != want {
        return Err(Error::format(offset, format!("expected {want} numbers")));
    }
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::format(offset, format!("bad number `{t}`")))
        })
        .collect()
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(VoxelGrid<T>, BinvoxHeader)> {
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Result<(usize, String)> {
        let start = *pos;
        let end = bytes[start..]
            .iter()
            .position(|b| *b == b'\n')
            .map(|i| start + i)
            .ok_or_else(|| Error::format(start, "truncated binvox header"))?;
        *pos = end + 1;
        let line = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| Error::format(start, "header line is not ASCII"))?;
        Ok((start, line.trim().to_string()))
    };

    let (_, magic) = next_line(&mut pos)?;
    if !magic.starts_with("#binvox") {
        return Err(Error::format(0, "missing #binvox magic"));
    }
    let mut dim = None;
    let mut header = BinvoxHeader::default();
    loop {
        let (at, line) = next_line(&mut pos)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.first().copied() {
            Some("data") => break,
            Some("dim") => {
                let d: Vec<usize> = tokens[1..]
                    .iter()
                    .map(|t| t.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::format(at, "bad dim line"))?;
                if d.len() != 3 || d[0] != d[1] || d[1] != d[2] || d[0] == 0 {
                    return Err(Error::format(at, format!("unsupported dims {d:?}")));
                }
                if d[0] > 1024 {
                    return Err(Error::format(at, format!("dimension {} overflows", d[0])));
                }
                dim = Some(d[0]);
            }
            Some("translate") => {
                let t = parse_floats(&tokens[1..], at, 3)?;
                header.translate = [t[0], t[1], t[2]];
            }
            Some("scale") => header.scale = parse_floats(&tokens[1..], at, 1)?[0],
            Some(other) => {
                return Err(Error::format(at, format!("unknown header line `{other}`")));
            }
            None => {}
        }
    }
    let r = dim.ok_or_else(|| Error::format(pos, "binvox header has no dim line"))?;
    let total = r * r * r;
    let mut values = vec![T::zero(); total];
    let mut filled = 0;
    while filled < total {
        if pos + 2 > bytes.len() {
            return Err(Error::format(
                pos,
                format!("truncated run-length data: {filled} of {total} voxels"),
            ));
        }
        let (value, count) = (bytes[pos], bytes[pos + 1] as usize);
        if filled + count > total {
            return Err(Error::format(pos, "run overflows the grid"));
        }
        if value != 0 {
            for i in filled..filled + count {
                let (x, y, z) = scan_to_cell(i, r);
                values[x + r * (y + r * z)] = T::one();
            }
        }
        filled += count;
        pos += 2;
    }
    Ok((VoxelGrid::from_values_unchecked(r, values), header))
}
