use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::scalar::{axpy, dot, matmul, Scalar};
use crate::nn::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Linear,
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Linear => T::one(),
        }
    }

    pub fn apply_in_place<T: Scalar>(self, xs: &mut [T]) {
        if self != Activation::Linear {
            for x in xs {
                *x = self.apply(*x);
            }
        }
    }

    /// Turns an upstream gradient w.r.t. the output into one w.r.t. the
    /// pre-activation, in place.
    pub fn backprop_in_place<T: Scalar>(self, outputs: &[T], grad: &mut [T]) {
        if self != Activation::Linear {
            for (g, y) in grad.iter_mut().zip(outputs) {
                *g *= self.derivative_from_output(*y);
            }
        }
    }
}

/// `out = act(W·x + b)` with `W` stored row-major `[out.len(), x.len()]`.
pub fn affine_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], act: Activation, out: &mut [T]) {
    let n = x.len();
    debug_assert_eq!(w.len(), out.len() * n);
    for (i, o) in out.iter_mut().enumerate() {
        *o = act.apply(dot(&w[i * n..(i + 1) * n], x) + b[i]);
    }
}

/// Backward of [`affine_forward`] given the gradient w.r.t. the
/// pre-activation. Accumulates into `dw`, `db`; writes `dx` when given.
pub fn affine_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    dpre: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    let n = x.len();
    for (i, &g) in dpre.iter().enumerate() {
        if g != T::zero() {
            axpy(g, x, &mut dw[i * n..(i + 1) * n]);
        }
        db[i] += g;
    }
    if let Some(dx) = dx {
        dx.fill(T::zero());
        for (i, &g) in dpre.iter().enumerate() {
            if g != T::zero() {
                axpy(g, &w[i * n..(i + 1) * n], dx);
            }
        }
    }
}

/// Row-batched [`affine_forward`]: `x` is `[n, in]`, `out` is `[n, out]`.
pub fn batch_affine_forward<T: Scalar>(x: &[T], n: usize, w: &[T], b: &[T], act: Activation, out: &mut [T]) {
    let o = b.len();
    let i = x.len() / n.max(1);
    for row in out.chunks_exact_mut(o) {
        row.copy_from_slice(b);
    }
    matmul(x, false, w, true, out, n, i, o, true);
    act.apply_in_place(out);
}

/// Backward of [`batch_affine_forward`] given pre-activation gradients
/// `dpre` (`[n, out]`). Accumulates `dw`, `db`; overwrites `dx` if given.
pub fn batch_affine_backward<T: Scalar>(
    x: &[T],
    n: usize,
    w: &[T],
    dpre: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    let o = db.len();
    let i = x.len() / n.max(1);
    matmul(dpre, true, x, false, dw, o, n, i, true);
    for row in dpre.chunks_exact(o) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    if let Some(dx) = dx {
        matmul(dpre, false, w, false, dx, n, o, i, false);
    }
}

/// Fully connected layer on a single vector.
pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    activation: Activation,
) -> Result<Tensor<T>> {
    let n = input.len();
    let m = bias.len();
    if weights.shape() != [m, n] {
        return Err(Error::Shape(format!(
            "dense weights {:?} incompatible with input {n} and bias {m}",
            weights.shape()
        )));
    }
    let mut out = vec![T::zero(); m];
    affine_forward(input.data(), weights.data(), bias.data(), activation, &mut out);
    Tensor::from_vec(&[m], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batched_affine_matches_rows() {
        let (n, i, o) = (5, 7, 3);
        let x: Vec<f64> = (0..n * i).map(|k| (k as f64 * 0.31).sin()).collect();
        let w: Vec<f64> = (0..o * i).map(|k| (k as f64 * 0.17).cos()).collect();
        let b = vec![0.1, -0.2, 0.3];
        let dpre: Vec<f64> = (0..n * o).map(|k| (k as f64 * 0.53).sin()).collect();
        let mut out = vec![0.0; n * o];
        batch_affine_forward(&x, n, &w, &b, Activation::Tanh, &mut out);
        let (mut dw, mut db, mut dx) = (vec![0.0; o * i], vec![0.0; o], vec![0.0; n * i]);
        batch_affine_backward(&x, n, &w, &dpre, &mut dw, &mut db, Some(&mut dx));
        let (mut dw1, mut db1) = (vec![0.0; o * i], vec![0.0; o]);
        for r in 0..n {
            let mut row = vec![0.0; o];
            affine_forward(&x[r * i..(r + 1) * i], &w, &b, Activation::Tanh, &mut row);
            for k in 0..o {
                assert!((row[k] - out[r * o + k]).abs() < 1e-12);
            }
            let mut dxr = vec![0.0; i];
            affine_backward(&x[r * i..(r + 1) * i], &w, &dpre[r * o..(r + 1) * o], &mut dw1, &mut db1, Some(&mut dxr));
            for k in 0..i {
                assert!((dxr[k] - dx[r * i + k]).abs() < 1e-12);
            }
        }
        for (a, b) in dw.iter().zip(&dw1).chain(db.iter().zip(&db1)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_weights_linear_passthrough() {
        let x = Tensor::<f64>::vector(&[0.3, -2.0, 7.5]);
        let mut w = Tensor::<f64>::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let b = Tensor::zeros(&[3]);
        let y = dense_forward(&x, &w, &b, Activation::Linear).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn relu_worked_example() {
        let x = Tensor::<f64>::vector(&[1.0, 2.0]);
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 1.0, -1.0, 0.0]).unwrap();
        let b = Tensor::vector(&[0.0, 1.0]);
        let y = dense_forward(&x, &w, &b, Activation::Relu).unwrap();
        assert_eq!(y.data(), &[3.0, 0.0]);
    }

    #[test]
    fn sigmoid_in_open_unit_interval() {
        let x = Tensor::<f64>::vector(&[-30.0, -1.0, 0.0, 2.0, 30.0]);
        let w = Tensor::from_vec(&[5, 5], {
            let mut v = vec![0.0; 25];
            for i in 0..5 {
                v[i * 5 + i] = 1.0;
            }
            v
        })
        .unwrap();
        let y = dense_forward(&x, &w, &Tensor::zeros(&[5]), Activation::Sigmoid).unwrap();
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(y.data()[2], 0.5);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let x = Tensor::<f32>::zeros(&[3]);
        let w = Tensor::zeros(&[2, 4]);
        let b = Tensor::zeros(&[2]);
        assert!(matches!(
            dense_forward(&x, &w, &b, Activation::Relu),
            Err(Error::Shape(_))
        ));
    }
}
