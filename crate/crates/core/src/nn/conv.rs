//! 4×4, stride-2, zero-pad-1 convolution and its transpose.
//!
//! Both are lowered to a single matrix product through an im2col buffer of
//! shape `[channels·16, out_h·out_w]`, row index `c·16 + ky·4 + kx`.

use crate::error::{Error, Result};
use crate::nn::scalar::{matmul, Scalar};
use crate::nn::tensor::Tensor;

pub const KERNEL: usize = 4;
const TAPS: usize = KERNEL * KERNEL;

/// Gathers stride-2 padded 4×4 patches of `x` (`[c, h, w]`) into `cols`.
pub fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let (ho, wo) = (h / 2, w / 2);
    let p = ho * wo;
    debug_assert_eq!(cols.len(), c * TAPS * p);
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[(ci * TAPS + ky * KERNEL + kx) * p..][..p];
                for oy in 0..ho {
                    let iy = (2 * oy + ky) as isize - 1;
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (2 * ox + kx) as isize - 1;
                        *d = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds `cols` into `x` (`[c, h, w]`).
pub fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, x: &mut [T]) {
    let (ho, wo) = (h / 2, w / 2);
    let p = ho * wo;
    debug_assert_eq!(cols.len(), c * TAPS * p);
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[(ci * TAPS + ky * KERNEL + kx) * p..][..p];
                for oy in 0..ho {
                    let iy = (2 * oy + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, s) in row[oy * wo..(oy + 1) * wo].iter().enumerate() {
                        let ix = (2 * ox + kx) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += *s;
                        }
                    }
                }
            }
        }
    }
}

/// Strided convolution halving each spatial extent. Weights `[c_out, c_in, 4, 4]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2d {
    pub c_in: usize,
    pub c_out: usize,
}

impl Conv2d {
    pub fn weight_shape(&self) -> [usize; 4] {
        [self.c_out, self.c_in, KERNEL, KERNEL]
    }

    pub fn fan_in(&self) -> usize {
        self.c_in * TAPS
    }

    /// Returns the output `[c_out, h/2, w/2]` and fills `cols` for backward.
    pub fn forward<T: Scalar>(
        &self,
        x: &[T],
        h: usize,
        w: usize,
        weight: &[T],
        bias: &[T],
        cols: &mut Vec<T>,
    ) -> Vec<T> {
        let p = (h / 2) * (w / 2);
        let k = self.c_in * TAPS;
        cols.resize(k * p, T::zero());
        im2col(x, self.c_in, h, w, cols);
        let mut y = vec![T::zero(); self.c_out * p];
        for (co, row) in y.chunks_exact_mut(p).enumerate() {
            row.fill(bias[co]);
        }
        matmul(weight, false, cols, false, &mut y, self.c_out, k, p, true);
        y
    }

    /// Accumulates weight/bias gradients; returns the input gradient when
    /// `need_dx`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Scalar>(
        &self,
        cols: &[T],
        h: usize,
        w: usize,
        weight: &[T],
        dy: &[T],
        dweight: &mut [T],
        dbias: &mut [T],
        need_dx: bool,
    ) -> Option<Vec<T>> {
        let p = (h / 2) * (w / 2);
        let k = self.c_in * TAPS;
        matmul(dy, false, cols, true, dweight, self.c_out, p, k, true);
        for (co, row) in dy.chunks_exact(p).enumerate() {
            dbias[co] += row.iter().copied().sum::<T>();
        }
        if !need_dx {
            return None;
        }
        let mut dcols = vec![T::zero(); k * p];
        matmul(weight, true, dy, false, &mut dcols, k, self.c_out, p, false);
        let mut dx = vec![T::zero(); self.c_in * h * w];
        col2im(&dcols, self.c_in, h, w, &mut dx);
        Some(dx)
    }
}

/// Transposed convolution doubling each spatial extent. Weights
/// `[c_in, c_out, 4, 4]`; with the roles of the channel axes swapped it is
/// the exact adjoint of [`Conv2d`] sharing the same weight tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Deconv2d {
    pub c_in: usize,
    pub c_out: usize,
}

impl Deconv2d {
    pub fn weight_shape(&self) -> [usize; 4] {
        [self.c_in, self.c_out, KERNEL, KERNEL]
    }

    pub fn fan_in(&self) -> usize {
        self.c_out * TAPS
    }

    /// Input `[c_in, h, w]` → output `[c_out, 2h, 2w]`.
    pub fn forward<T: Scalar>(&self, x: &[T], h: usize, w: usize, weight: &[T], bias: &[T]) -> Vec<T> {
        let p = h * w;
        let k = self.c_out * TAPS;
        let mut cols = vec![T::zero(); k * p];
        matmul(weight, true, x, false, &mut cols, k, self.c_in, p, false);
        let (oh, ow) = (2 * h, 2 * w);
        let mut y = vec![T::zero(); self.c_out * oh * ow];
        for (co, plane) in y.chunks_exact_mut(oh * ow).enumerate() {
            plane.fill(bias[co]);
        }
        col2im(&cols, self.c_out, oh, ow, &mut y);
        y
    }

    #[allow(clippy::too_many_arguments)]
    pub fn backward<T: Scalar>(
        &self,
        x: &[T],
        h: usize,
        w: usize,
        weight: &[T],
        dy: &[T],
        dweight: &mut [T],
        dbias: &mut [T],
        need_dx: bool,
    ) -> Option<Vec<T>> {
        let p = h * w;
        let k = self.c_out * TAPS;
        let (oh, ow) = (2 * h, 2 * w);
        let mut dcols = vec![T::zero(); k * p];
        im2col(dy, self.c_out, oh, ow, &mut dcols);
        matmul(x, false, &dcols, true, dweight, self.c_in, p, k, true);
        for (co, plane) in dy.chunks_exact(oh * ow).enumerate() {
            dbias[co] += plane.iter().copied().sum::<T>();
        }
        if !need_dx {
            return None;
        }
        let mut dx = vec![T::zero(); self.c_in * p];
        matmul(weight, false, &dcols, false, &mut dx, self.c_in, k, p, false);
        Some(dx)
    }
}

fn check_spatial(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] if h >= 2 && w >= 2 && h % 2 == 0 && w % 2 == 0 => Ok((c, h, w)),
        _ => Err(Error::Shape(format!(
            "expected [C, H, W] with even H, W >= 2, got {shape:?}"
        ))),
    }
}

/// Convolution of a `[C_in, H, W]` tensor with `[C_out, C_in, 4, 4]` weights.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = check_spatial(input.shape())?;
    let ws = weights.shape();
    if ws.len() != 4 || ws[1] != c || ws[2] != KERNEL || ws[3] != KERNEL || bias.len() != ws[0] {
        return Err(Error::Shape(format!(
            "conv weights {ws:?} / bias {} incompatible with input channels {c}",
            bias.len()
        )));
    }
    let layer = Conv2d { c_in: c, c_out: ws[0] };
    let mut cols = Vec::new();
    let y = layer.forward(input.data(), h, w, weights.data(), bias.data(), &mut cols);
    Tensor::from_vec(&[ws[0], h / 2, w / 2], y)
}

/// Transposed convolution of `[C_in, H, W]` with `[C_in, C_out, 4, 4]` weights.
pub fn deconv2d_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = match *input.shape() {
        [c, h, w] if h >= 1 && w >= 1 => (c, h, w),
        ref s => return Err(Error::Shape(format!("expected [C, H, W], got {s:?}"))),
    };
    let ws = weights.shape();
    if ws.len() != 4 || ws[0] != c || ws[2] != KERNEL || ws[3] != KERNEL || bias.len() != ws[1] {
        return Err(Error::Shape(format!(
            "deconv weights {ws:?} / bias {} incompatible with input channels {c}",
            bias.len()
        )));
    }
    let layer = Deconv2d { c_in: c, c_out: ws[1] };
    let y = layer.forward(input.data(), h, w, weights.data(), bias.data());
    Tensor::from_vec(&[ws[1], 2 * h, 2 * w], y)
}
