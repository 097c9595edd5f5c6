//! Squared-error losses.
//!
//! [`mse`] averages over every element. The model losses use
//! [`sum_squared_error`] per sample and average over samples (batch axis);
//! both phases follow that convention.

use crate::error::{Error, Result};
use crate::nn::scalar::Scalar;
use crate::nn::tensor::Tensor;

pub fn mse<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("mse of {:?} and {:?}", a.shape(), b.shape())));
    }
    if a.is_empty() {
        return Ok(T::zero());
    }
    Ok(sum_squared_error(a.data(), b.data()) / T::of(a.len() as f64))
}

pub fn sum_squared_error<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// `scale · 2 (a − b)`, the gradient of `scale · Σ (a − b)²` w.r.t. `a`.
pub fn sse_grad<T: Scalar>(a: &[T], b: &[T], scale: T) -> Vec<T> {
    let two = T::of(2.0) * scale;
    a.iter().zip(b).map(|(&x, &y)| two * (x - y)).collect()
}
