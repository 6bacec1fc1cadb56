use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

use super::conv::{col2im, im2col, Geometry};
use super::norm::{BatchNorm, NormCache};
use super::plan::{Activation, LayerKind, LayerSpec, KERNEL};

/// Samples per weight-gradient partial sum. Partials are reduced in a fixed
/// order, so results do not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; the pass can be differentiated.
    Train,
    /// Running statistics; a pure per-sample function.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T: Scalar> {
    pub spec: LayerSpec,
    /// `[out, in, 4, 4, 4]` for convolutions, `[in, out, 4, 4, 4]` for
    /// transposed convolutions.
    pub weight: Vec<T>,
    pub bias: Option<Vec<T>>,
    pub norm: Option<BatchNorm<T>>,
}

impl<T: Scalar> Layer<T> {
    fn geometry(&self) -> Geometry {
        let s = &self.spec;
        match s.kind {
            LayerKind::Conv => Geometry {
                big: s.in_extent,
                small: s.out_extent,
                stride: s.stride,
                padding: s.padding,
            },
            LayerKind::TransposedConv => Geometry {
                big: s.out_extent,
                small: s.in_extent,
                stride: s.stride,
                padding: s.padding,
            },
        }
    }

    /// Linear part for one sample: `x` is `in_len`, `out` is `out_len`.
    fn apply(&self, x: &[T], out: &mut [T]) {
        let s = &self.spec;
        let geo = self.geometry();
        let sc = geo.small_cells();
        let taps = KERNEL.pow(3);
        match s.kind {
            LayerKind::Conv => {
                let k = s.in_channels * taps;
                let mut col = vec![T::zero(); k * sc];
                im2col(&geo, s.in_channels, x, &mut col);
                T::gemm(
                    s.out_channels,
                    k,
                    sc,
                    T::one(),
                    &self.weight,
                    k as isize,
                    1,
                    &col,
                    sc as isize,
                    1,
                    T::zero(),
                    out,
                    sc as isize,
                    1,
                );
            }
            LayerKind::TransposedConv => {
                let rows = s.out_channels * taps;
                let mut col = vec![T::zero(); rows * sc];
                T::gemm(
                    rows,
                    s.in_channels,
                    sc,
                    T::one(),
                    &self.weight,
                    1,
                    rows as isize,
                    x,
                    sc as isize,
                    1,
                    T::zero(),
                    &mut col,
                    sc as isize,
                    1,
                );
                out.fill(T::zero());
                col2im(&geo, s.out_channels, &col, out);
            }
        }
        if let Some(bias) = &self.bias {
            let cells = s.out_extent.pow(3);
            for (c, b) in bias.iter().enumerate() {
                for v in &mut out[c * cells..(c + 1) * cells] {
                    *v = *v + *b;
                }
            }
        }
    }

    /// Weight gradient and optional input gradient for one chunk of samples.
    fn backward_chunk(&self, xs: &[T], dzs: &[T], want_dx: bool) -> (Vec<T>, Vec<T>) {
        let s = &self.spec;
        let geo = self.geometry();
        let sc = geo.small_cells();
        let taps = KERNEL.pow(3);
        let (in_len, out_len) = (s.in_len(), s.out_len());
        let n = xs.len() / in_len;
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut dx = if want_dx {
            vec![T::zero(); xs.len()]
        } else {
            Vec::new()
        };
        match s.kind {
            LayerKind::Conv => {
                let k = s.in_channels * taps;
                let mut col = vec![T::zero(); k * sc];
                let mut dcol = vec![T::zero(); k * sc];
                for i in 0..n {
                    let x = &xs[i * in_len..(i + 1) * in_len];
                    let dz = &dzs[i * out_len..(i + 1) * out_len];
                    im2col(&geo, s.in_channels, x, &mut col);
                    T::gemm(
                        s.out_channels,
                        sc,
                        k,
                        T::one(),
                        dz,
                        sc as isize,
                        1,
                        &col,
                        1,
                        sc as isize,
                        T::one(),
                        &mut dw,
                        k as isize,
                        1,
                    );
                    if want_dx {
                        T::gemm(
                            k,
                            s.out_channels,
                            sc,
                            T::one(),
                            &self.weight,
                            1,
                            k as isize,
                            dz,
                            sc as isize,
                            1,
                            T::zero(),
                            &mut dcol,
                            sc as isize,
                            1,
                        );
                        col2im(
                            &geo,
                            s.in_channels,
                            &dcol,
                            &mut dx[i * in_len..(i + 1) * in_len],
                        );
                    }
                }
            }
            LayerKind::TransposedConv => {
                let rows = s.out_channels * taps;
                let mut dcol = vec![T::zero(); rows * sc];
                for i in 0..n {
                    let x = &xs[i * in_len..(i + 1) * in_len];
                    let dz = &dzs[i * out_len..(i + 1) * out_len];
                    im2col(&geo, s.out_channels, dz, &mut dcol);
                    T::gemm(
                        s.in_channels,
                        sc,
                        rows,
                        T::one(),
                        x,
                        sc as isize,
                        1,
                        &dcol,
                        1,
                        sc as isize,
                        T::one(),
                        &mut dw,
                        rows as isize,
                        1,
                    );
                    if want_dx {
                        T::gemm(
                            s.in_channels,
                            rows,
                            sc,
                            T::one(),
                            &self.weight,
                            rows as isize,
                            1,
                            &dcol,
                            sc as isize,
                            1,
                            T::zero(),
                            &mut dx[i * in_len..(i + 1) * in_len],
                            sc as isize,
                            1,
                        );
                    }
                }
            }
        }
        (dw, dx)
    }
}

/// Cached activations of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward<T: Scalar> {
    pub batch: usize,
    pub mode: Mode,
    /// `acts[0]` is the input, `acts[i + 1]` the activated output of layer `i`.
    acts: Vec<Vec<T>>,
    norms: Vec<Option<NormCache<T>>>,
    logits: Vec<T>,
}

impl<T: Scalar> Forward<T> {
    /// Final sigmoid outputs, `batch × out_len`.
    pub fn output(&self) -> &[T] {
        self.acts.last().unwrap()
    }

    /// Final pre-sigmoid values.
    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    pub fn into_output(mut self) -> Vec<T> {
        self.acts.pop().unwrap()
    }
}

pub enum Upstream<'a, T> {
    /// Gradient w.r.t. the sigmoid outputs.
    Output(&'a [T]),
    /// Gradient w.r.t. the final logits.
    Logits(&'a [T]),
}

/// Gradient tensors in [`Network::trainable`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T: Scalar> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            tensors: net
                .trainable()
                .iter()
                .map(|t| vec![T::zero(); t.len()])
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + *y;
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in &mut self.tensors {
            for v in t.iter_mut() {
                *v = *v * k;
            }
        }
    }

    pub fn flat(&self) -> impl Iterator<Item = T> + '_ {
        self.tensors.iter().flatten().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.flat().all(|v| v == T::zero())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Scalar> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    /// Normal(0, `std`) weights, zero biases, identity batch norm.
    pub fn init(plan: &[LayerSpec], std: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("positive std");
        let layers = plan
            .iter()
            .map(|spec| Layer {
                spec: *spec,
                weight: (0..spec.weight_len())
                    .map(|_| cast(normal.sample(rng)))
                    .collect(),
                bias: spec.has_bias().then(|| vec![T::zero(); spec.out_channels]),
                norm: spec.norm.then(|| BatchNorm::new(spec.out_channels)),
            })
            .collect();
        Self { layers }
    }

    pub fn plan(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].spec.in_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().unwrap().spec.out_len()
    }

    /// Learnable tensors: per layer the weight, then bias, then gamma and beta.
    pub fn trainable(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            if let Some(b) = &l.bias {
                out.push(b);
            }
            if let Some(n) = &l.norm {
                out.push(&n.gamma);
                out.push(&n.beta);
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            if let Some(b) = &mut l.bias {
                out.push(b);
            }
            if let Some(n) = &mut l.norm {
                out.push(&mut n.gamma);
                out.push(&mut n.beta);
            }
        }
        out
    }

    /// Layer index owning each trainable tensor.
    pub fn trainable_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let n = 1 + usize::from(l.bias.is_some()) + 2 * usize::from(l.norm.is_some());
                std::iter::repeat_n(i, n)
            })
            .collect()
    }

    /// Every stored tensor with a stable name, trainable or not.
    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, &[T])> {
        let mut out: Vec<(String, &[T])> = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &l.weight));
            if let Some(b) = &l.bias {
                out.push((format!("{prefix}.{i}.bias"), b));
            }
            if let Some(n) = &l.norm {
                out.push((format!("{prefix}.{i}.bn.gamma"), &n.gamma));
                out.push((format!("{prefix}.{i}.bn.beta"), &n.beta));
                out.push((format!("{prefix}.{i}.bn.running_mean"), &n.running_mean));
                out.push((format!("{prefix}.{i}.bn.running_var"), &n.running_var));
            }
        }
        out
    }

    pub fn named_tensors_mut(&mut self, prefix: &str) -> Vec<(String, &mut Vec<T>)> {
        let mut out: Vec<(String, &mut Vec<T>)> = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &mut l.weight));
            if let Some(b) = &mut l.bias {
                out.push((format!("{prefix}.{i}.bias"), b));
            }
            if let Some(n) = &mut l.norm {
                out.push((format!("{prefix}.{i}.bn.gamma"), &mut n.gamma));
                out.push((format!("{prefix}.{i}.bn.beta"), &mut n.beta));
                out.push((format!("{prefix}.{i}.bn.running_mean"), &mut n.running_mean));
                out.push((format!("{prefix}.{i}.bn.running_var"), &mut n.running_var));
            }
        }
        out
    }

    pub fn forward(&self, input: Vec<T>, batch: usize, mode: Mode) -> Result<Forward<T>> {
        if batch == 0 || input.len() != batch * self.input_len() {
            return Err(Error::contract(format!(
                "network input has {} values, expected {batch} x {}",
                input.len(),
                self.input_len()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut norms = Vec::with_capacity(self.layers.len());
        let mut logits = Vec::new();
        acts.push(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let s = &layer.spec;
            let x = &acts[i];
            let mut z = vec![T::zero(); batch * s.out_len()];
            z.par_chunks_mut(s.out_len())
                .zip(x.par_chunks(s.in_len()))
                .for_each(|(out, xin)| layer.apply(xin, out));
            let spatial = s.out_extent.pow(3);
            let cache = match (&layer.norm, mode) {
                (Some(bn), Mode::Train) => Some(bn.forward_train(&mut z, batch, spatial)),
                (Some(bn), Mode::Eval) => {
                    bn.forward_eval(&mut z, batch, spatial);
                    None
                }
                (None, _) => None,
            };
            norms.push(cache);
            if i + 1 == self.layers.len() {
                logits = z.clone();
            }
            activate(s.activation, &mut z);
            acts.push(z);
        }
        Ok(Forward {
            batch,
            mode,
            acts,
            norms,
            logits,
        })
    }

    /// Reverse pass through a train-mode forward. Returns the parameter
    /// gradients and, if requested, the gradient w.r.t. the network input.
    pub fn backward(
        &self,
        fwd: &Forward<T>,
        upstream: Upstream<'_, T>,
        want_input_grad: bool,
    ) -> Result<(Gradients<T>, Option<Vec<T>>)> {
        if fwd.mode != Mode::Train {
            return Err(Error::contract("backward needs a train-mode forward"));
        }
        let batch = fwd.batch;
        let last = self.layers.len() - 1;
        let mut grad = match upstream {
            Upstream::Output(g) => {
                check_len(g.len(), fwd.output().len())?;
                let mut g = g.to_vec();
                activation_backward(self.layers[last].spec.activation, fwd.output(), &mut g);
                g
            }
            Upstream::Logits(g) => {
                check_len(g.len(), fwd.logits.len())?;
                g.to_vec()
            }
        };
        let mut per_layer: Vec<Vec<Vec<T>>> = vec![Vec::new(); self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let s = &layer.spec;
            if i != last {
                activation_backward(s.activation, &fwd.acts[i + 1], &mut grad);
            }
            let spatial = s.out_extent.pow(3);
            let mut tensors = Vec::with_capacity(4);
            let (dz, norm_grads) = match (&layer.norm, &fwd.norms[i]) {
                (Some(bn), Some(cache)) => {
                    let (dx, dg, db) = bn.backward(cache, &grad, batch, spatial);
                    (dx, Some((dg, db)))
                }
                _ => (grad, None),
            };
            let bias_grad = layer.bias.as_ref().map(|_| {
                let mut db = vec![T::zero(); s.out_channels];
                for b in 0..batch {
                    for (c, acc) in db.iter_mut().enumerate() {
                        let at = b * s.out_len() + c * spatial;
                        *acc = *acc + dz[at..at + spatial].iter().copied().sum::<T>();
                    }
                }
                db
            });
            let want_dx = i > 0 || want_input_grad;
            let xs = &fwd.acts[i];
            let chunks: Vec<(Vec<T>, Vec<T>)> = xs
                .par_chunks(s.in_len() * GRAD_CHUNK)
                .zip(dz.par_chunks(s.out_len() * GRAD_CHUNK))
                .map(|(x, d)| layer.backward_chunk(x, d, want_dx))
                .collect();
            let mut dw = vec![T::zero(); layer.weight.len()];
            let mut dx = Vec::with_capacity(if want_dx { xs.len() } else { 0 });
            for (w, x) in chunks {
                for (a, b) in dw.iter_mut().zip(&w) {
                    *a = *a + *b;
                }
                dx.extend_from_slice(&x);
            }
            tensors.push(dw);
            tensors.extend(bias_grad);
            if let Some((dg, db)) = norm_grads {
                tensors.push(dg);
                tensors.push(db);
            }
            if tensors.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    layer: i,
                    message: "gradient is not finite".into(),
                });
            }
            per_layer[i] = tensors;
            grad = dx;
        }
        let grads = Gradients {
            tensors: per_layer.into_iter().flatten().collect(),
        };
        Ok((grads, want_input_grad.then_some(grad)))
    }

    /// Folds the batch statistics of a train-mode pass into the running averages.
    pub fn update_running_stats(&mut self, fwd: &Forward<T>) {
        for (layer, cache) in self.layers.iter_mut().zip(&fwd.norms) {
            if let (Some(bn), Some(c)) = (&mut layer.norm, cache) {
                bn.update_running(&c.mean, &c.var);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors("n")
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

fn check_len(got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::contract(format!(
            "upstream gradient has {got} values, expected {want}"
        )));
    }
    Ok(())
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn activate<T: Scalar>(act: Activation, z: &mut [T]) {
    match act {
        Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(T::zero())),
        Activation::LeakyRelu(slope) => {
            let k: T = cast(slope);
            z.iter_mut().for_each(|v| {
                if *v < T::zero() {
                    *v = *v * k
                }
            })
        }
        Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
    }
}

/// Turns a gradient w.r.t. activated outputs into one w.r.t. pre-activations.
fn activation_backward<T: Scalar>(act: Activation, out: &[T], grad: &mut [T]) {
    match act {
        Activation::Relu => grad.iter_mut().zip(out).for_each(|(g, o)| {
            if *o <= T::zero() {
                *g = T::zero()
            }
        }),
        Activation::LeakyRelu(slope) => {
            let k: T = cast(slope);
            grad.iter_mut().zip(out).for_each(|(g, o)| {
                if *o < T::zero() {
                    *g = *g * k
                }
            })
        }
        Activation::Sigmoid => grad
            .iter_mut()
            .zip(out)
            .for_each(|(g, o)| *g = *g * *o * (T::one() - *o)),
    }
}
