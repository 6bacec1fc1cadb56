//! Adversarial losses on discriminator probabilities, with their gradients
//! taken w.r.t. the discriminator logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorLossForm {
    /// `-mean log D(G(z))`.
    NonSaturating,
    /// `mean log(1 - D(G(z)))`, the literal minimax term.
    Minimax,
}

fn clamp<T: Scalar>(p: T, eps: T) -> T {
    p.max(eps).min(T::one() - eps)
}

/// Derivative of the clamp: zero where it is active.
fn inside<T: Scalar>(p: T, eps: T) -> bool {
    p > eps && p < T::one() - eps
}

fn nonempty<T>(v: &[T], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::contract(format!("{what} batch is empty")));
    }
    Ok(())
}

fn mean<T: Scalar>(it: impl Iterator<Item = T>, n: usize) -> T {
    it.fold(T::zero(), |a, b| a + b) / cast(n as f64)
}

/// `-mean log p_real - mean log(1 - p_fake)`.
pub fn d_loss<T: Scalar>(real: &[T], fake: &[T], eps: T) -> Result<T> {
    nonempty(real, "real")?;
    nonempty(fake, "fake")?;
    let r = mean(real.iter().map(|p| -clamp(*p, eps).ln()), real.len());
    let f = mean(
        fake.iter().map(|p| -(T::one() - clamp(*p, eps)).ln()),
        fake.len(),
    );
    Ok(r + f)
}

/// Gradients of [`d_loss`] w.r.t. the real and fake logits.
pub fn d_loss_logit_grads<T: Scalar>(real: &[T], fake: &[T], eps: T) -> (Vec<T>, Vec<T>) {
    let nr: T = cast(real.len() as f64);
    let nf: T = cast(fake.len() as f64);
    let dr = real
        .iter()
        .map(|p| {
            if inside(*p, eps) {
                -(T::one() - *p) / nr
            } else {
                T::zero()
            }
        })
        .collect();
    let df = fake
        .iter()
        .map(|p| if inside(*p, eps) { *p / nf } else { T::zero() })
        .collect();
    (dr, df)
}

pub fn g_loss<T: Scalar>(fake: &[T], eps: T, form: GeneratorLossForm) -> Result<T> {
    nonempty(fake, "fake")?;
    Ok(match form {
        GeneratorLossForm::NonSaturating => {
            mean(fake.iter().map(|p| -clamp(*p, eps).ln()), fake.len())
        }
        GeneratorLossForm::Minimax => mean(
            fake.iter().map(|p| (T::one() - clamp(*p, eps)).ln()),
            fake.len(),
        ),
    })
}

pub fn g_loss_logit_grads<T: Scalar>(fake: &[T], eps: T, form: GeneratorLossForm) -> Vec<T> {
    let n: T = cast(fake.len() as f64);
    fake.iter()
        .map(|p| {
            if !inside(*p, eps) {
                return T::zero();
            }
            match form {
                GeneratorLossForm::NonSaturating => -(T::one() - *p) / n,
                GeneratorLossForm::Minimax => -*p / n,
            }
        })
        .collect()
}

/// Fraction classified correctly: reals above 0.5, fakes at or below.
pub fn d_accuracy<T: Scalar>(real: &[T], fake: &[T]) -> f64 {
    let half: T = cast(0.5);
    let total = real.len() + fake.len();
    if total == 0 {
        return 0.0;
    }
    let correct =
        real.iter().filter(|p| **p > half).count() + fake.iter().filter(|p| **p <= half).count();
    correct as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const EPS: f64 = 1e-7;

    #[test]
    fn d_loss_values() {
        assert!(d_loss(&[1.0, 1.0], &[0.0], EPS).unwrap() < 1e-6);
        let v = d_loss(&[0.5; 3], &[0.5; 5], EPS).unwrap();
        assert_abs_diff_eq!(v, 2.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 1.3863, epsilon = 1e-4);
        let a = d_loss(&[0.9, 0.2, 0.6], &[0.1, 0.7], EPS).unwrap();
        let b = d_loss(&[0.6, 0.9, 0.2], &[0.7, 0.1], EPS).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        assert!(d_loss::<f64>(&[], &[0.5], EPS).is_err());
        assert!(d_loss(&[0.0], &[1.0], EPS).unwrap().is_finite());
    }

    #[test]
    fn g_loss_values() {
        let ns = GeneratorLossForm::NonSaturating;
        assert!(g_loss(&[1.0, 1.0], EPS, ns).unwrap() < 1e-6);
        assert_abs_diff_eq!(
            g_loss(&[0.5; 4], EPS, ns).unwrap(),
            2f64.ln(),
            epsilon = 1e-12
        );
        assert!(g_loss(&[0.4, 0.3], EPS, ns).unwrap() < g_loss(&[0.3, 0.3], EPS, ns).unwrap());
        assert!(g_loss::<f64>(&[], EPS, ns).is_err());
        assert!(g_loss(&[0.0], EPS, ns).unwrap().is_finite());
    }

    #[test]
    fn accuracy_tie_rule() {
        assert_eq!(d_accuracy(&[0.9, 0.8], &[0.1]), 1.0);
        assert_abs_diff_eq!(d_accuracy(&[0.5; 3], &[0.5; 5]), 5.0 / 8.0);
    }

    #[test]
    fn logit_grads_match_finite_differences() {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let real_l = [0.3, -1.2, 2.0];
        let fake_l = [-0.4, 1.1];
        let loss = |r: &[f64], f: &[f64]| {
            let rp: Vec<f64> = r.iter().map(|x| sig(*x)).collect();
            let fp: Vec<f64> = f.iter().map(|x| sig(*x)).collect();
            d_loss(&rp, &fp, EPS).unwrap()
        };
        let rp: Vec<f64> = real_l.iter().map(|x| sig(*x)).collect();
        let fp: Vec<f64> = fake_l.iter().map(|x| sig(*x)).collect();
        let (dr, df) = d_loss_logit_grads(&rp, &fp, EPS);
        let h = 1e-6;
        for i in 0..3 {
            let (mut p, mut m) = (real_l, real_l);
            p[i] += h;
            m[i] -= h;
            let fd = (loss(&p, &fake_l) - loss(&m, &fake_l)) / (2.0 * h);
            assert_abs_diff_eq!(fd, dr[i], epsilon = 1e-8);
        }
        for i in 0..2 {
            let (mut p, mut m) = (fake_l, fake_l);
            p[i] += h;
            m[i] -= h;
            let fd = (loss(&real_l, &p) - loss(&real_l, &m)) / (2.0 * h);
            assert_abs_diff_eq!(fd, df[i], epsilon = 1e-8);
        }
        for form in [GeneratorLossForm::NonSaturating, GeneratorLossForm::Minimax] {
            let g = g_loss_logit_grads(&fp, EPS, form);
            for i in 0..2 {
                let (mut p, mut m) = (fake_l, fake_l);
                p[i] += h;
                m[i] -= h;
                let f = |l: &[f64]| {
                    g_loss(&l.iter().map(|x| sig(*x)).collect::<Vec<_>>(), EPS, form).unwrap()
                };
                assert_abs_diff_eq!((f(&p) - f(&m)) / (2.0 * h), g[i], epsilon = 1e-8);
            }
        }
    }
}
