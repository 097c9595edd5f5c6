use crate::data::TARGET_DIM;

/// Weights of the current input and the three previous outputs.
pub const LOWPASS_COEFFS: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

/// Last three filtered outputs, most recent first.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState<const N: usize = TARGET_DIM> {
    pub history: [[f64; N]; 3],
}

impl<const N: usize> Default for FilterState<N> {
    fn default() -> Self {
        Self { history: [[0.0; N]; 3] }
    }
}

pub fn lowpass_step<const N: usize>(y: &[f64; N], state: &mut FilterState<N>) -> [f64; N] {
    let [a, b, c, d] = LOWPASS_COEFFS;
    let h = &state.history;
    let out: [f64; N] = std::array::from_fn(|k| a * y[k] + b * h[0][k] + c * h[1][k] + d * h[2][k]);
    state.history = [out, h[0], h[1]];
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_step_response() {
        let mut s = FilterState::<1>::default();
        let got: Vec<f64> = (0..4).map(|_| lowpass_step(&[1.0], &mut s)[0]).collect();
        for (g, e) in got.iter().zip([0.4, 0.52, 0.636, 0.7348]) {
            assert!((g - e).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn constant_input_reaches_steady_state() {
        let mut s = FilterState::<5>::default();
        let mut out = [0.0; 5];
        for _ in 0..200 {
            out = lowpass_step(&[0.7; 5], &mut s);
        }
        assert!(out.iter().all(|v| (v - 0.7).abs() < 1e-12));
        let mut z = FilterState::<5>::default();
        for _ in 0..10 {
            assert_eq!(lowpass_step(&[0.0; 5], &mut z), [0.0; 5]);
        }
    }

    proptest! {
        #[test]
        fn output_is_bounded_by_inputs_and_history(
            xs in prop::collection::vec(-5.0f64..5.0, 4..40)
        ) {
            let mut s = FilterState::<1>::default();
            for &x in &xs {
                let prev = s.history;
                let y = lowpass_step(&[x], &mut s)[0];
                let lo = prev.iter().map(|h| h[0]).fold(x, f64::min);
                let hi = prev.iter().map(|h| h[0]).fold(x, f64::max);
                prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
            }
        }
    }
}
