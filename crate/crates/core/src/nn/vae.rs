//! Reparameterisation and the Gaussian KL term.

use crate::error::{Error, Result};
use crate::nn::scalar::Scalar;
use crate::nn::tensor::Tensor;

/// `z = mu + exp(logvar / 2) ⊙ eps`.
pub fn reparameterize<T: Scalar>(mu: &Tensor<T>, logvar: &Tensor<T>, eps: &Tensor<T>) -> Result<Tensor<T>> {
    if mu.shape() != logvar.shape() || mu.shape() != eps.shape() {
        return Err(Error::Shape(format!(
            "reparameterize: mu {:?}, logvar {:?}, eps {:?}",
            mu.shape(),
            logvar.shape(),
            eps.shape()
        )));
    }
    let z = reparameterize_slice(mu.data(), logvar.data(), eps.data());
    Tensor::from_vec(mu.shape(), z)
}

pub fn reparameterize_slice<T: Scalar>(mu: &[T], logvar: &[T], eps: &[T]) -> Vec<T> {
    let half = T::of(0.5);
    mu.iter()
        .zip(logvar)
        .zip(eps)
        .map(|((&m, &lv), &e)| m + (half * lv).exp() * e)
        .collect()
}

/// `-1/2 Σ (1 + logvar - mu² - exp(logvar))`, summed over dimensions.
pub fn kl_divergence<T: Scalar>(mu: &Tensor<T>, logvar: &Tensor<T>) -> Result<T> {
    if mu.shape() != logvar.shape() {
        return Err(Error::Shape(format!(
            "kl_divergence: mu {:?} vs logvar {:?}",
            mu.shape(),
            logvar.shape()
        )));
    }
    Ok(kl_slice(mu.data(), logvar.data()))
}

pub fn kl_slice<T: Scalar>(mu: &[T], logvar: &[T]) -> T {
    let s: T = mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| T::one() + lv - m * m - lv.exp())
        .sum();
    -T::of(0.5) * s
}

/// Gradients of [`kl_slice`] scaled by `scale`, accumulated into `dmu` and
/// `dlogvar`.
pub fn kl_backward<T: Scalar>(mu: &[T], logvar: &[T], scale: T, dmu: &mut [T], dlogvar: &mut [T]) {
    let half = T::of(0.5);
    for j in 0..mu.len() {
        dmu[j] += scale * mu[j];
        dlogvar[j] += scale * half * (logvar[j].exp() - T::one());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn zero_noise_returns_mean() {
        let mu = Tensor::<f64>::vector(&[0.3, -1.2, 4.0]);
        let lv = Tensor::vector(&[1.0, -2.0, 0.5]);
        let z = reparameterize(&mu, &lv, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(z.data(), mu.data());
    }

    #[test]
    fn unit_variance_adds_noise() {
        let mu = Tensor::<f64>::vector(&[0.3, -1.2]);
        let e = Tensor::vector(&[0.7, 0.1]);
        let z = reparameterize(&mu, &Tensor::zeros(&[2]), &e).unwrap();
        assert!((z.data()[0] - 1.0).abs() < 1e-12 && (z.data()[1] + 1.1).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_mean() {
        let mu = [0.8, -0.5, 2.0];
        let lv = [0.0, 1.0, -1.0];
        let mut rng = Rng::new(77);
        let n = 10_000;
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let eps: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let z = reparameterize_slice(&mu, &lv, &eps);
            for j in 0..3 {
                acc[j] += z[j];
            }
        }
        for j in 0..3 {
            let sigma = (0.5 * lv[j] as f64).exp();
            let mean = acc[j] / n as f64;
            assert!((mean - mu[j]).abs() < 3.0 * sigma / 100.0, "dim {j}: {mean}");
        }
    }

    #[test]
    fn kl_closed_form_examples() {
        let z = Tensor::<f64>::zeros(&[4]);
        assert_eq!(kl_divergence(&z, &z).unwrap(), 0.0);
        let mu = Tensor::<f64>::vector(&[1.0]);
        assert_eq!(kl_divergence(&mu, &Tensor::zeros(&[1])).unwrap(), 0.5);
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(v in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..16)) {
            let mu: Vec<f64> = v.iter().map(|p| p.0).collect();
            let lv: Vec<f64> = v.iter().map(|p| p.1).collect();
            prop_assert!(kl_slice(&mu, &lv) >= -1e-12);
        }

        #[test]
        fn kl_zero_only_at_standard_normal(m in -3.0f64..3.0, lv in -3.0f64..3.0) {
            prop_assume!(m.abs() > 1e-3 || lv.abs() > 1e-3);
            prop_assert!(kl_slice(&[m], &[lv]) > 0.0);
        }
    }
}
