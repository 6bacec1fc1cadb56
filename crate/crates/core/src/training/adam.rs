use crate::model::{Gradients, Network};
use crate::scalar::{cast, Scalar};

/// Adam moment estimates for one network, in trainable-tensor order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T: Scalar> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    /// Number of updates applied so far.
    pub t: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &Network<T>) -> Self {
        let zeros: Vec<Vec<T>> = net
            .trainable()
            .iter()
            .map(|t| vec![T::zero(); t.len()])
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>, h: AdamHyper) {
        self.t += 1;
        let (b1, b2): (T, T) = (cast(h.beta1), cast(h.beta2));
        let correction1 = 1.0 - h.beta1.powi(self.t as i32);
        let correction2 = 1.0 - h.beta2.powi(self.t as i32);
        let step: T = cast(h.lr / correction1);
        let c2: T = cast(correction2);
        let eps: T = cast(h.eps);
        let params = net.trainable_mut();
        for (((p, g), m), v) in params
            .into_iter()
            .zip(&grads.tensors)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                p[i] = p[i] - step * m[i] / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, LayerKind, LayerSpec};
    use rand::SeedableRng;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let spec = LayerSpec {
            kind: LayerKind::Conv,
            in_channels: 1,
            out_channels: 1,
            in_extent: 4,
            out_extent: 1,
            stride: 1,
            padding: 0,
            norm: false,
            activation: Activation::Sigmoid,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut net = Network::<f64>::init(&[spec], 0.02, &mut rng);
        let before = net.clone();
        let mut grads = Gradients::zeros_like(&net);
        grads.tensors[0][0] = 3.0;
        grads.tensors[0][1] = -0.5;
        let mut adam = Adam::new(&net);
        let h = AdamHyper {
            lr: 0.01,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        };
        adam.step(&mut net, &grads, h);
        let w0 = net.layers[0].weight[0] - before.layers[0].weight[0];
        let w1 = net.layers[0].weight[1] - before.layers[0].weight[1];
        assert!((w0 + 0.01).abs() < 1e-8 && (w1 - 0.01).abs() < 1e-8);
        assert_eq!(net.layers[0].weight[2], before.layers[0].weight[2]);
        assert_eq!(adam.t, 1);
    }
}
