use crate::scalar::{cast, Scalar};

pub(crate) const EPS: f64 = 1e-5;
pub(crate) const MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over batch and spatial positions.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T: Scalar> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// What backward needs from a train-mode pass, plus the batch statistics
/// that may later be folded into the running averages.
#[derive(Clone, Debug)]
pub(crate) struct NormCache<T: Scalar> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes `x` (`batch × channels × spatial`) in place with batch statistics.
    pub(crate) fn forward_train(&self, x: &mut [T], batch: usize, spatial: usize) -> NormCache<T> {
        let channels = self.channels();
        let count: T = cast((batch * spatial) as f64);
        let eps: T = cast(EPS);
        let mut mean = vec![T::zero(); channels];
        let mut var = vec![T::zero(); channels];
        for (c, (m, v)) in mean.iter_mut().zip(var.iter_mut()).enumerate() {
            let mut sum = T::zero();
            for b in 0..batch {
                let at = (b * channels + c) * spatial;
                sum = sum + x[at..at + spatial].iter().copied().sum::<T>();
            }
            *m = sum / count;
            let mut sq = T::zero();
            for b in 0..batch {
                let at = (b * channels + c) * spatial;
                sq = sq
                    + x[at..at + spatial]
                        .iter()
                        .map(|v| (*v - *m) * (*v - *m))
                        .sum::<T>();
            }
            *v = sq / count;
        }
        let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); x.len()];
        for b in 0..batch {
            for c in 0..channels {
                let at = (b * channels + c) * spatial;
                let (m, s, g, be) = (mean[c], inv_std[c], self.gamma[c], self.beta[c]);
                for (xv, h) in x[at..at + spatial]
                    .iter_mut()
                    .zip(&mut xhat[at..at + spatial])
                {
                    *h = (*xv - m) * s;
                    *xv = g * *h + be;
                }
            }
        }
        NormCache {
            xhat,
            inv_std,
            mean,
            var,
        }
    }

    pub(crate) fn forward_eval(&self, x: &mut [T], batch: usize, spatial: usize) {
        let channels = self.channels();
        let eps: T = cast(EPS);
        for c in 0..channels {
            let s = T::one() / (self.running_var[c] + eps).sqrt();
            let scale = self.gamma[c] * s;
            let shift = self.beta[c] - self.running_mean[c] * scale;
            for b in 0..batch {
                let at = (b * channels + c) * spatial;
                for v in &mut x[at..at + spatial] {
                    *v = *v * scale + shift;
                }
            }
        }
    }

    /// Returns `(dx, dgamma, dbeta)` for upstream gradient `dy`.
    pub(crate) fn backward(
        &self,
        cache: &NormCache<T>,
        dy: &[T],
        batch: usize,
        spatial: usize,
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let channels = self.channels();
        let count: T = cast((batch * spatial) as f64);
        let mut dgamma = vec![T::zero(); channels];
        let mut dbeta = vec![T::zero(); channels];
        for c in 0..channels {
            for b in 0..batch {
                let at = (b * channels + c) * spatial;
                for (d, h) in dy[at..at + spatial]
                    .iter()
                    .zip(&cache.xhat[at..at + spatial])
                {
                    dgamma[c] = dgamma[c] + *d * *h;
                    dbeta[c] = dbeta[c] + *d;
                }
            }
        }
        let mut dx = vec![T::zero(); dy.len()];
        for c in 0..channels {
            let k = self.gamma[c] * cache.inv_std[c] / count;
            for b in 0..batch {
                let at = (b * channels + c) * spatial;
                for ((o, d), h) in dx[at..at + spatial]
                    .iter_mut()
                    .zip(&dy[at..at + spatial])
                    .zip(&cache.xhat[at..at + spatial])
                {
                    *o = k * (count * *d - dbeta[c] - *h * dgamma[c]);
                }
            }
        }
        (dx, dgamma, dbeta)
    }

    pub(crate) fn update_running(&mut self, mean: &[T], var: &[T]) {
        let m: T = cast(MOMENTUM);
        let keep = T::one() - m;
        for c in 0..self.channels() {
            self.running_mean[c] = keep * self.running_mean[c] + m * mean[c];
            self.running_var[c] = keep * self.running_var[c] + m * var[c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_output_is_standardized() {
        let bn = BatchNorm::<f64>::new(2);
        let mut x: Vec<f64> = (0..16).map(|i| (i * i) as f64 * 0.1).collect();
        bn.forward_train(&mut x, 2, 4);
        for c in 0..2 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|b| x[(b * 2 + c) * 4..(b * 2 + c + 1) * 4].to_vec())
                .collect();
            let mean: f64 = vals.iter().sum::<f64>() / 8.0;
            let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut bn = BatchNorm::<f64>::new(2);
        bn.gamma = vec![1.3, 0.7];
        bn.beta = vec![0.1, -0.2];
        let x: Vec<f64> = (0..12)
            .map(|i| ((i * 7) % 5) as f64 * 0.3 + i as f64 * 0.01)
            .collect();
        let w: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let loss = |x: &[f64]| {
            let mut y = x.to_vec();
            bn.forward_train(&mut y, 3, 2);
            y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut y = x.clone();
        let cache = bn.forward_train(&mut y, 3, 2);
        let (dx, _, _) = bn.backward(&cache, &w, 3, 2);
        for i in 0..x.len() {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-6, "{i}: {fd} vs {}", dx[i]);
        }
    }
}
