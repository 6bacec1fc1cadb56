//! `PVGAN1` checkpoints: magic, a JSON header with the configs, counters,
//! then shape-prefixed little-endian `f32` tensors (weights, batch-norm
//! statistics and Adam moments).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{init_discriminator, init_generator, Layer, LayerKind, ModelConfig, Network};
use crate::scalar::Scalar;

use super::adam::Adam;
use super::config::TrainConfig;
use super::step::TrainState;

pub const MAGIC: &[u8; 6] = b"PVGAN1";

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
}

fn weight_shape<T: Scalar>(layer: &Layer<T>) -> Vec<u32> {
    let s = &layer.spec;
    let (a, b) = match s.kind {
        LayerKind::Conv => (s.out_channels, s.in_channels),
        LayerKind::TransposedConv => (s.in_channels, s.out_channels),
    };
    vec![a as u32, b as u32, 4, 4, 4]
}

fn shapes<T: Scalar>(net: &Network<T>) -> Vec<Vec<u32>> {
    net.layers
        .iter()
        .flat_map(|l| {
            let c = l.spec.out_channels as u32;
            let mut v = vec![weight_shape(l)];
            if l.bias.is_some() {
                v.push(vec![c]);
            }
            if l.norm.is_some() {
                v.extend(std::iter::repeat_n(vec![c], 4));
            }
            v
        })
        .collect()
}

fn trainable_shapes<T: Scalar>(net: &Network<T>) -> Vec<Vec<u32>> {
    net.layers
        .iter()
        .flat_map(|l| {
            let c = l.spec.out_channels as u32;
            let mut v = vec![weight_shape(l)];
            if l.bias.is_some() {
                v.push(vec![c]);
            }
            if l.norm.is_some() {
                v.extend(std::iter::repeat_n(vec![c], 2));
            }
            v
        })
        .collect()
}

struct Entry<'a, T> {
    name: String,
    shape: Vec<u32>,
    data: &'a [T],
}

fn entries<T: Scalar>(state: &TrainState<T>) -> Vec<Entry<'_, T>> {
    let mut out = Vec::new();
    for (prefix, net, opt) in [
        ("g", &state.gen.net, &state.gen_opt),
        ("d", &state.disc.net, &state.disc_opt),
    ] {
        for ((name, data), shape) in net.named_tensors(prefix).into_iter().zip(shapes(net)) {
            out.push(Entry { name, shape, data });
        }
        let tshapes = trainable_shapes(net);
        for (moment, store) in [("m", &opt.m), ("v", &opt.v)] {
            for (i, (data, shape)) in store.iter().zip(&tshapes).enumerate() {
                out.push(Entry {
                    name: format!("{prefix}.adam.{moment}.{i}"),
                    shape: shape.clone(),
                    data,
                });
            }
        }
    }
    out
}

pub fn encode_checkpoint<T: Scalar>(state: &TrainState<T>) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        model: state.model_config().clone(),
        train: state.config.clone(),
    })
    .expect("configs serialize");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&state.step.to_le_bytes());
    out.extend_from_slice(&state.prev_accuracy.to_le_bytes());
    out.extend_from_slice(&state.gen_opt.t.to_le_bytes());
    out.extend_from_slice(&state.disc_opt.t.to_le_bytes());
    let entries = entries(state);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.push(e.shape.len() as u8);
        for d in &e.shape {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in e.data {
            out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.bytes.len(),
                format!("checkpoint truncated: needed {n} bytes at {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<TrainState<T>> {
    if bytes.len() >= 6 && bytes.starts_with(b"PVGAN") && &bytes[..6] != MAGIC {
        return Err(Error::Version {
            found: String::from_utf8_lossy(&bytes[..6]).into_owned(),
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
        });
    }
    if !bytes.starts_with(MAGIC) {
        return Err(Error::format(0, "missing PVGAN1 magic"));
    }
    let mut r = Reader { bytes, pos: 6 };
    let len = r.u32()? as usize;
    let at = r.pos;
    let header: Header = serde_json::from_slice(r.take(len)?)
        .map_err(|e| Error::format(at, format!("bad checkpoint header: {e}")))?;
    let mut state: TrainState<T> = TrainState {
        gen: init_generator(&header.model, 0)?,
        disc: init_discriminator(&header.model, 0)?,
        gen_opt: Adam {
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        },
        disc_opt: Adam {
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        },
        config: header.train,
        step: 0,
        prev_accuracy: 0.0,
    };
    state.gen_opt = Adam::new(&state.gen.net);
    state.disc_opt = Adam::new(&state.disc.net);
    state.step = r.u64()?;
    state.prev_accuracy = r.f64()?;
    state.gen_opt.t = r.u64()?;
    state.disc_opt.t = r.u64()?;
    let count = r.u32()? as usize;

    // Slots in the same order `entries` writes them.
    let expected: Vec<(String, Vec<u32>)> = entries(&state)
        .into_iter()
        .map(|e| (e.name, e.shape))
        .collect();
    if count != expected.len() {
        return Err(Error::format(
            r.pos - 4,
            format!(
                "checkpoint holds {count} tensors, model needs {}",
                expected.len()
            ),
        ));
    }
    let mut tensors: Vec<Vec<T>> = Vec::with_capacity(count);
    for (name, shape) in &expected {
        let at = r.pos;
        let nlen = r.u16()? as usize;
        let got_name = String::from_utf8_lossy(r.take(nlen)?).into_owned();
        let ndim = r.u8()? as usize;
        let mut got_shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            got_shape.push(r.u32()?);
        }
        if &got_name != name || &got_shape != shape {
            return Err(Error::format(
                at,
                format!("tensor `{got_name}` {got_shape:?} where `{name}` {shape:?} was expected"),
            ));
        }
        let n: usize = shape.iter().map(|d| *d as usize).product();
        let raw = r.take(n * 4)?;
        tensors.push(
            raw.chunks_exact(4)
                .map(|c| T::from_f32(f32::from_le_bytes(c.try_into().unwrap())).unwrap())
                .collect(),
        );
    }
    let mut it = tensors.into_iter();
    for (prefix, which) in [("g", 0), ("d", 1)] {
        let (net, opt) = if which == 0 {
            (&mut state.gen.net, &mut state.gen_opt)
        } else {
            (&mut state.disc.net, &mut state.disc_opt)
        };
        for (_, slot) in net.named_tensors_mut(prefix) {
            *slot = it.next().unwrap();
        }
        for slot in opt.m.iter_mut().chain(opt.v.iter_mut()) {
            *slot = it.next().unwrap();
        }
    }
    Ok(state)
}

pub fn save_checkpoint<T: Scalar>(state: &TrainState<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(state)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<TrainState<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
