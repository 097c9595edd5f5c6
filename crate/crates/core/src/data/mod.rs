//! Ground-truth targets, normalization, windowing and dataset assembly.

mod bundle;
mod dataset;

pub use bundle::{bundle_extra, read_bundle, write_bundle, write_bundle_with, BUNDLE_KIND};
pub use dataset::{
    build_datasets, DatasetBundle, Keyframe, Phase1, Phase2, Profile, Sequence, Snapshot,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{BoxSpec, ShapeClass, CHANNELS};

pub const TARGET_DIM: usize = 5;
pub const LOW: f64 = 0.2;
pub const HIGH: f64 = 0.8;

/// Below this magnitude an orientation code decodes to "no orientation".
pub const ORIENTATION_THRESHOLD: f64 = 0.3;

/// `(sin 2θ, cos 2θ)` for an orientation in degrees; `(0, 0)` for none.
pub fn encode_orientation(theta_deg: Option<f64>) -> [f64; 2] {
    match theta_deg {
        None => [0.0, 0.0],
        Some(t) => {
            let two = (2.0 * t.rem_euclid(180.0)).to_radians();
            [two.sin(), two.cos()]
        }
    }
}

pub fn decode_orientation(s: f64, c: f64) -> Option<f64> {
    if s.hypot(c) < ORIENTATION_THRESHOLD {
        return None;
    }
    let deg = s.atan2(c).to_degrees() / 2.0;
    let folded = deg.rem_euclid(180.0);
    Some(if folded >= 180.0 { 0.0 } else { folded })
}

/// Affine `[-1, 1] → [0.2, 0.8]`.
pub fn ori_to_target(v: f64) -> f64 {
    0.5 + 0.3 * v
}

pub fn target_to_ori(v: f64) -> f64 {
    (v - 0.5) / 0.3
}

pub fn shape_label(class: ShapeClass) -> f64 {
    match class {
        ShapeClass::RectPrism => 0.2,
        ShapeClass::Cylinder => 0.35,
        ShapeClass::SphereLarge => 0.5,
        ShapeClass::SphereMedium => 0.65,
        ShapeClass::SphereSmall => 0.8,
    }
}

pub const SHAPE_BOUNDARIES: [f64; 4] = [0.275, 0.425, 0.575, 0.725];

/// Nearest label, with a value exactly on a boundary going to the upper class.
pub fn classify_shape(y: f64) -> ShapeClass {
    let idx = SHAPE_BOUNDARIES.iter().take_while(|&&b| y >= b).count();
    ShapeClass::ALL[idx]
}

/// Floor position in mm ↔ normalized `[0.2, 0.8]` per axis.
pub fn position_to_target(pos_mm: [f64; 2], box_spec: &BoxSpec) -> [f64; 2] {
    [
        LOW + (HIGH - LOW) * pos_mm[0] / box_spec.interior_x,
        LOW + (HIGH - LOW) * pos_mm[1] / box_spec.interior_y,
    ]
}

pub fn target_to_position(t: [f64; 2], box_spec: &BoxSpec) -> [f64; 2] {
    [
        (t[0] - LOW) / (HIGH - LOW) * box_spec.interior_x,
        (t[1] - LOW) / (HIGH - LOW) * box_spec.interior_y,
    ]
}

/// Normalized regression target for one scene state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pos: [f64; 2],
    pub ori: [f64; 2],
    pub shape: f64,
}

impl GroundTruth {
    pub fn new(pos_mm: [f64; 2], theta_deg: Option<f64>, class: ShapeClass, box_spec: &BoxSpec) -> Self {
        let [s, c] = encode_orientation(theta_deg);
        Self {
            pos: position_to_target(pos_mm, box_spec),
            ori: [ori_to_target(s), ori_to_target(c)],
            shape: shape_label(class),
        }
    }

    pub fn from_target(t: &[f32]) -> Self {
        Self {
            pos: [t[0] as f64, t[1] as f64],
            ori: [t[2] as f64, t[3] as f64],
            shape: t[4] as f64,
        }
    }

    pub fn to_target(&self) -> [f32; TARGET_DIM] {
        [self.pos[0], self.pos[1], self.ori[0], self.ori[1], self.shape].map(|v| v as f32)
    }
}

/// Per-channel min/max observed on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ChannelStats {
    /// Stats over rows of `CHANNELS` raw values.
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a [f64; CHANNELS]>) -> Result<Self> {
        let mut min = vec![f64::INFINITY; CHANNELS];
        let mut max = vec![f64::NEG_INFINITY; CHANNELS];
        let mut any = false;
        for row in rows {
            any = true;
            for (c, &v) in row.iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        if !any {
            return Err(Error::Invalid("channel statistics need at least one frame".into()));
        }
        Ok(Self { min, max })
    }

    pub fn normalize(&self, channel: usize, v: f64) -> f64 {
        normalize_value(v, self.min[channel], self.max[channel])
    }

    pub fn denormalize(&self, channel: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[channel], self.max[channel]);
        if hi == lo {
            lo
        } else {
            lo + (v - LOW) / (HIGH - LOW) * (hi - lo)
        }
    }

    pub fn normalize_row(&self, row: &[f64; CHANNELS]) -> [f32; CHANNELS] {
        std::array::from_fn(|c| self.normalize(c, row[c]) as f32)
    }
}

/// Affine map `min → 0.2`, `max → 0.8`; a constant channel maps to 0.5.
pub fn normalize_value(v: f64, min: f64, max: f64) -> f64 {
    if max == min {
        0.5
    } else {
        LOW + (HIGH - LOW) * (v - min) / (max - min)
    }
}

pub fn normalize_channel(values: &[f64], min: f64, max: f64) -> Vec<f64> {
    values.iter().map(|&v| normalize_value(v, min, max)).collect()
}

pub fn normalize_image(pixels: &[u8]) -> Vec<f32> {
    pixels.iter().map(|&p| p as f32 / 255.0).collect()
}

/// A `len`-step slice of sequence `seq` beginning at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub seq: usize,
    pub start: usize,
    pub len: usize,
}

impl Window {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn last(&self) -> usize {
        self.end() - 1
    }
}

pub fn slice_windows(seq: usize, seq_len: usize, window: usize, stride: usize) -> Result<Vec<Window>> {
    if window == 0 || stride == 0 {
        return Err(Error::Invalid("window and stride must be positive".into()));
    }
    if seq_len < window {
        return Err(Error::SequenceTooShort { len: seq_len, window });
    }
    Ok((0..=(seq_len - window) / stride)
        .map(|k| Window {
            seq,
            start: k * stride,
            len: window,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn orientation_examples() {
        let close = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12;
        assert!(close(encode_orientation(Some(0.0)), [0.0, 1.0]));
        assert!(close(encode_orientation(Some(45.0)), [1.0, 0.0]));
        assert!(close(encode_orientation(Some(90.0)), [0.0, -1.0]));
        assert_eq!(encode_orientation(None), [0.0, 0.0]);
        let a = encode_orientation(Some(0.5));
        let b = encode_orientation(Some(179.5));
        assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 0.04);
        assert!(close(encode_orientation(Some(190.0)), encode_orientation(Some(10.0))));
    }

    #[test]
    fn decode_examples_and_round_trip() {
        assert_eq!(decode_orientation(0.0, 1.0), Some(0.0));
        assert!((decode_orientation(1.0, 0.0).unwrap() - 45.0).abs() < 1e-12);
        assert_eq!(decode_orientation(0.0, 0.0), None);
        assert_eq!(decode_orientation(0.2, 0.2), None);
        for k in 0..18 {
            let theta = 10.0 * k as f64;
            let [s, c] = encode_orientation(Some(theta));
            let back = decode_orientation(s, c).unwrap();
            assert!((back - theta).abs() <= 1e-9, "{theta} -> {back}");
        }
    }

    #[test]
    fn shape_labels_and_boundaries() {
        assert_eq!(shape_label(ShapeClass::Cylinder), 0.35);
        assert_eq!(classify_shape(0.30), ShapeClass::Cylinder);
        assert_eq!(classify_shape(0.275), ShapeClass::Cylinder);
        assert_eq!(classify_shape(0.2749999), ShapeClass::RectPrism);
        assert_eq!(classify_shape(0.425), ShapeClass::SphereLarge);
        assert_eq!(classify_shape(0.575), ShapeClass::SphereMedium);
        assert_eq!(classify_shape(0.725), ShapeClass::SphereSmall);
        assert_eq!(classify_shape(-3.0), ShapeClass::RectPrism);
        assert_eq!(classify_shape(9.0), ShapeClass::SphereSmall);
        for c in ShapeClass::ALL {
            assert_eq!(classify_shape(shape_label(c)), c);
        }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_channel(&[2.0, 4.0, 3.0], 2.0, 4.0), vec![0.2, 0.8, 0.5]);
        assert_eq!(normalize_channel(&[7.0, 7.0], 7.0, 7.0), vec![0.5, 0.5]);
        assert_eq!(normalize_image(&[255, 0]), vec![1.0, 0.0]);
    }

    #[test]
    fn window_counts() {
        assert_eq!(slice_windows(0, 1000, 250, 50).unwrap().len(), 16);
        assert_eq!(slice_windows(0, 250, 250, 50).unwrap().len(), 1);
        assert_eq!(slice_windows(0, 300, 250, 50).unwrap().len(), 2);
        assert!(matches!(slice_windows(0, 249, 250, 50), Err(Error::SequenceTooShort { .. })));
    }

    #[test]
    fn sphere_truth_has_neutral_orientation() {
        let b = BoxSpec::default();
        let t = GroundTruth::new([50.0, 60.0], None, ShapeClass::SphereSmall, &b);
        assert_eq!(t.ori, [0.5, 0.5]);
        assert_eq!(t.pos, [0.5, 0.5]);
        assert_eq!(t.shape, 0.8);
    }

    proptest! {
        #[test]
        fn encodings_on_unit_circle(theta in -720.0f64..720.0) {
            let [s, c] = encode_orientation(Some(theta));
            prop_assert!((s * s + c * c - 1.0).abs() < 1e-12);
        }

        #[test]
        fn targets_in_range(x in 0.0f64..=100.0, y in 0.0f64..=120.0, theta in 0.0f64..180.0, k in 0usize..5) {
            let b = BoxSpec::default();
            let class = ShapeClass::ALL[k];
            let t = GroundTruth::new([x, y], class.is_oriented().then_some(theta), class, &b);
            for v in t.to_target() {
                prop_assert!((0.2..=0.8).contains(&(v as f64)) || (v - 0.2).abs() < 1e-6 || (v - 0.8).abs() < 1e-6);
            }
        }

        #[test]
        fn normalization_inverts(values in proptest::collection::vec(-1e3f64..1e3, 2..40)) {
            let mut row = [0.0; CHANNELS];
            let rows: Vec<[f64; CHANNELS]> = values.iter().map(|&v| { row[3] = v; row[7] = -2.0 * v; row }).collect();
            let stats = ChannelStats::from_rows(rows.iter()).unwrap();
            for r in &rows {
                for c in [3, 7] {
                    let back = stats.denormalize(c, stats.normalize(c, r[c]));
                    prop_assert!((back - r[c]).abs() <= 1e-6 * (1.0 + r[c].abs()));
                }
                // constant channel
                prop_assert_eq!(stats.normalize(0, r[0]), 0.5);
            }
        }

        #[test]
        fn windows_stay_inside(len in 250usize..3000, stride in 1usize..120) {
            let ws = slice_windows(2, len, 250, stride).unwrap();
            prop_assert_eq!(ws.len(), (len - 250) / stride + 1);
            for w in ws {
                prop_assert!(w.end() <= len);
                prop_assert_eq!(w.start % stride, 0);
            }
        }
    }
}
