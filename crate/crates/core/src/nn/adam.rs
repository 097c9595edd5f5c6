use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::ParamSet;
use crate::nn::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates mirroring a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<T>> = params.iter().map(|(_, _, t)| vec![T::zero(); t.len()]).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Bias-corrected Adam update using each tensor's stored gradient.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, parameter set has {}",
                self.m.len(),
                params.len()
            )));
        }
        for (_, name, t) in params.iter() {
            if t.grad().is_none() {
                return Err(Error::MissingGradient(name.to_string()));
            }
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (ob1, ob2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let step = T::of(c.lr / bc1);
        let inv_sqrt_bc2 = T::of(1.0 / bc2.sqrt());
        let eps = T::of(c.eps);
        for ((tensor, m), v) in params.tensors_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = tensor.grad().expect("checked above").to_vec();
            for (k, theta) in tensor.data_mut().iter_mut().enumerate() {
                m[k] = b1 * m[k] + ob1 * g[k];
                v[k] = b2 * v[k] + ob2 * g[k] * g[k];
                *theta -= step * m[k] / (v[k].sqrt() * inv_sqrt_bc2 + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Gradients;

    fn single(value: f64, grad: f64) -> (ParamSet<f64>, AdamState<f64>) {
        let mut p = ParamSet::new(0);
        let id = p.register_zeros("theta", &[1]).unwrap();
        p.get_mut(id).data_mut()[0] = value;
        let mut g = Gradients::zeros_like(&p);
        g.bufs[0][0] = grad;
        p.set_grads(&g).unwrap();
        let s = AdamState::new(&p, AdamConfig::default());
        (p, s)
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [1.0, 10.0] {
            let (mut p, mut s) = single(0.0, g);
            s.step(&mut p).unwrap();
            assert!((p.data(crate::nn::ParamId(0))[0] + 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_gradient_is_identity() {
        let (mut p, mut s) = single(0.75, 0.0);
        for _ in 0..5 {
            s.step(&mut p).unwrap();
        }
        assert_eq!(p.data(crate::nn::ParamId(0))[0], 0.75);
        assert_eq!(s.t, 5);
    }

    #[test]
    fn missing_gradient_rejected() {
        let mut p = ParamSet::<f32>::new(0);
        p.register_zeros("w", &[2]).unwrap();
        let mut s = AdamState::new(&p, AdamConfig::default());
        assert!(matches!(s.step(&mut p), Err(Error::MissingGradient(n)) if n == "w"));
        assert_eq!(s.t, 0);
    }
}
