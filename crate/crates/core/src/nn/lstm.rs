use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::dense::{affine_backward, Activation};
use crate::nn::scalar::{dot, Scalar};
use crate::nn::tensor::Tensor;

/// Squashing used for the cell candidate and the cell output. Gates always
/// use the logistic sigmoid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateActivation {
    #[default]
    Tanh,
    Sigmoid,
}

impl CandidateActivation {
    pub fn activation(self) -> Activation {
        match self {
            CandidateActivation::Tanh => Activation::Tanh,
            CandidateActivation::Sigmoid => Activation::Sigmoid,
        }
    }
}

/// LSTM cell. Gate rows are stacked `[input, forget, candidate, output]`,
/// so `wx` is `[4H, D]`, `wh` is `[4H, H]` and `b` is `[4H]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    pub candidate: CandidateActivation,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmWeights<'a, T> {
    pub wx: &'a [T],
    pub wh: &'a [T],
    pub b: &'a [T],
}

pub struct LstmGrads<'a, T> {
    pub wx: &'a mut [T],
    pub wh: &'a mut [T],
    pub b: &'a mut [T],
}

/// Everything one step needs for its backward pass.
#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    /// Post-activation gates `[i, f, g, o]`.
    pub gates: Vec<T>,
    pub c: Vec<T>,
    pub c_act: Vec<T>,
    pub h: Vec<T>,
}

impl Lstm {
    pub fn step<T: Scalar>(&self, x: &[T], h_prev: &[T], c_prev: &[T], w: &LstmWeights<'_, T>) -> LstmCache<T> {
        let (d, hd) = (self.input, self.hidden);
        let cand = self.candidate.activation();
        let mut gates = vec![T::zero(); 4 * hd];
        for (r, gate) in gates.iter_mut().enumerate() {
            let pre = dot(&w.wx[r * d..(r + 1) * d], x) + dot(&w.wh[r * hd..(r + 1) * hd], h_prev) + w.b[r];
            *gate = if (2 * hd..3 * hd).contains(&r) {
                cand.apply(pre)
            } else {
                Activation::Sigmoid.apply(pre)
            };
        }
        let mut c = vec![T::zero(); hd];
        let mut c_act = vec![T::zero(); hd];
        let mut h = vec![T::zero(); hd];
        for j in 0..hd {
            let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            c[j] = f * c_prev[j] + i * g;
            c_act[j] = cand.apply(c[j]);
            h[j] = o * c_act[j];
        }
        LstmCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates,
            c,
            c_act,
            h,
        }
    }

    /// Backward through one step given gradients flowing into `h` and `c`.
    /// Returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward<T: Scalar>(
        &self,
        cache: &LstmCache<T>,
        w: &LstmWeights<'_, T>,
        dh: &[T],
        dc: &[T],
        grads: &mut LstmGrads<'_, T>,
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let hd = self.hidden;
        let cand = self.candidate.activation();
        let g = &cache.gates;
        let mut dpre = vec![T::zero(); 4 * hd];
        let mut dc_prev = vec![T::zero(); hd];
        for j in 0..hd {
            let (i, f, gg, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
            let d_o = dh[j] * cache.c_act[j];
            let dct = dc[j] + dh[j] * o * cand.derivative_from_output(cache.c_act[j]);
            dpre[j] = dct * gg * i * (T::one() - i);
            dpre[hd + j] = dct * cache.c_prev[j] * f * (T::one() - f);
            dpre[2 * hd + j] = dct * i * cand.derivative_from_output(gg);
            dpre[3 * hd + j] = d_o * o * (T::one() - o);
            dc_prev[j] = dct * f;
        }
        let mut dx = vec![T::zero(); self.input];
        let mut dh_prev = vec![T::zero(); hd];
        affine_backward(&cache.x, w.wx, &dpre, grads.wx, grads.b, Some(&mut dx));
        let mut scratch_db = vec![T::zero(); 4 * hd];
        affine_backward(&cache.h_prev, w.wh, &dpre, grads.wh, &mut scratch_db, Some(&mut dh_prev));
        (dx, dh_prev, dc_prev)
    }

    /// Single step on tensors with shape checking.
    pub fn step_tensors<T: Scalar>(
        &self,
        x: &Tensor<T>,
        h_prev: &Tensor<T>,
        c_prev: &Tensor<T>,
        wx: &Tensor<T>,
        wh: &Tensor<T>,
        b: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let (d, hd) = (self.input, self.hidden);
        if x.len() != d
            || h_prev.len() != hd
            || c_prev.len() != hd
            || wx.shape() != [4 * hd, d]
            || wh.shape() != [4 * hd, hd]
            || b.len() != 4 * hd
        {
            return Err(Error::Shape(format!(
                "lstm step with input {d}, hidden {hd}: x {:?}, h {:?}, c {:?}, wx {:?}, wh {:?}, b {:?}",
                x.shape(),
                h_prev.shape(),
                c_prev.shape(),
                wx.shape(),
                wh.shape(),
                b.shape()
            )));
        }
        let w = LstmWeights {
            wx: wx.data(),
            wh: wh.data(),
            b: b.data(),
        };
        let cache = self.step(x.data(), h_prev.data(), c_prev.data(), &w);
        Ok((
            Tensor::from_vec(&[hd], cache.h)?,
            Tensor::from_vec(&[hd], cache.c)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_parameters_fixed_point() {
        let cell = Lstm { input: 3, hidden: 2, candidate: CandidateActivation::Tanh };
        let (wx, wh, b) = (vec![0.0; 24], vec![0.0; 16], vec![0.0; 8]);
        let w = LstmWeights { wx: &wx, wh: &wh, b: &b };
        let cache = cell.step(&[1.0, -2.0, 0.5], &[0.3, 0.7], &[0.0, 0.0], &w);
        assert!(cache.gates[..4].iter().all(|&v| v == 0.5));
        assert!(cache.gates[4..6].iter().all(|&v| v == 0.0));
        assert_eq!(cache.h, vec![0.0, 0.0]);
        assert_eq!(cache.c, vec![0.0, 0.0]);
    }

    #[test]
    fn matches_hand_unrolled_two_unit_cell() {
        let mut rng = Rng::new(9);
        let (d, hd) = (3, 2);
        let wx: Vec<f64> = (0..4 * hd * d).map(|_| rng.range(-1.0, 1.0)).collect();
        let wh: Vec<f64> = (0..4 * hd * hd).map(|_| rng.range(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..4 * hd).map(|_| rng.range(-1.0, 1.0)).collect();
        let x = [0.2, -0.4, 0.9];
        let hp = [0.1, -0.3];
        let cp = [0.5, -0.2];
        for cand in [CandidateActivation::Tanh, CandidateActivation::Sigmoid] {
            let squash = |v: f64| match cand {
                CandidateActivation::Tanh => v.tanh(),
                CandidateActivation::Sigmoid => sig(v),
            };
            let pre = |r: usize| {
                let mut s = b[r];
                for k in 0..d {
                    s += wx[r * d + k] * x[k];
                }
                for k in 0..hd {
                    s += wh[r * hd + k] * hp[k];
                }
                s
            };
            let cell = Lstm { input: d, hidden: hd, candidate: cand };
            let out = cell.step(&x, &hp, &cp, &LstmWeights { wx: &wx, wh: &wh, b: &b });
            for j in 0..hd {
                let i = sig(pre(j));
                let f = sig(pre(hd + j));
                let g = squash(pre(2 * hd + j));
                let o = sig(pre(3 * hd + j));
                let c = f * cp[j] + i * g;
                let h = o * squash(c);
                assert!((out.c[j] - c).abs() < 1e-14);
                assert!((out.h[j] - h).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn repeated_input_contracts() {
        for seed in 0..10 {
            let mut rng = Rng::new(100 + seed);
            let (d, hd) = (4, 3);
            let small = |rng: &mut Rng, n| (0..n).map(|_| rng.range(-0.3, 0.3)).collect::<Vec<f64>>();
            let (wx, wh, b) = (small(&mut rng, 4 * hd * d), small(&mut rng, 4 * hd * hd), small(&mut rng, 4 * hd));
            let x = small(&mut rng, d);
            let cell = Lstm { input: d, hidden: hd, candidate: CandidateActivation::Tanh };
            let w = LstmWeights { wx: &wx, wh: &wh, b: &b };
            let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
            let mut deltas = Vec::new();
            for _ in 0..100 {
                let s = cell.step(&x, &h, &c, &w);
                let delta = s.h.iter().zip(&h).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                deltas.push(delta);
                h = s.h;
                c = s.c;
            }
            assert!(deltas[99] < 1e-6 * deltas[0].max(1e-300) + 1e-12, "seed {seed}: {:?}", &deltas[95..]);
            // Past the first few transients the step size shrinks monotonically.
            for k in 10..99 {
                assert!(deltas[k + 1] <= deltas[k] + 1e-15, "seed {seed} step {k}");
            }
        }
    }

    #[test]
    fn tensor_step_checks_shapes() {
        let cell = Lstm { input: 2, hidden: 2, candidate: CandidateActivation::Tanh };
        let z = |n: &[usize]| Tensor::<f32>::zeros(n);
        assert!(cell.step_tensors(&z(&[2]), &z(&[2]), &z(&[2]), &z(&[8, 2]), &z(&[8, 2]), &z(&[8])).is_ok());
        assert!(cell.step_tensors(&z(&[3]), &z(&[2]), &z(&[2]), &z(&[8, 2]), &z(&[8, 2]), &z(&[8])).is_err());
    }
}
