//! Evaluation metrics, latent-space inspection, output filtering and the
//! simulated online prediction loop.

pub mod filter;
pub mod online;
pub mod pca;
pub mod probe;

pub use filter::{lowpass_step, FilterState, LOWPASS_COEFFS};
pub use online::{online_predict, OnlineConfig, OnlineRecord, OnlineStatus};
pub use pca::{pca_latent, Pca};
pub use probe::{fit_least_squares, r_squared, LinearModel, ShapeProbe};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{classify_shape, decode_orientation, target_to_ori, target_to_position, TARGET_DIM};
use crate::error::{Error, Result};
use crate::sim::{BoxSpec, ShapeClass};

/// Euclidean distance in floor millimetres between two normalized positions.
pub fn position_error_mm(pred: [f64; 2], truth: [f64; 2], box_spec: &BoxSpec) -> f64 {
    let p = target_to_position(pred, box_spec);
    let t = target_to_position(truth, box_spec);
    (p[0] - t[0]).hypot(p[1] - t[1])
}

/// Angle in `[0, 180)` of an orientation code, without the "no orientation"
/// threshold.
pub fn raw_angle_deg(s: f64, c: f64) -> f64 {
    let a = (s.atan2(c).to_degrees() / 2.0).rem_euclid(180.0);
    if a >= 180.0 {
        0.0
    } else {
        a
    }
}

/// Folded angular error in `[0, 90]` between two normalized orientation codes.
/// `None` when the true object carries no orientation.
pub fn orientation_error_deg(pred: [f64; 2], truth: [f64; 2], truth_class: ShapeClass) -> Option<f64> {
    if !truth_class.is_oriented() {
        return None;
    }
    let t = raw_angle_deg(target_to_ori(truth[0]), target_to_ori(truth[1]));
    let p = raw_angle_deg(target_to_ori(pred[0]), target_to_ori(pred[1]));
    Some(fold_deg(p - t))
}

pub fn fold_deg(delta: f64) -> f64 {
    let d = delta.abs().rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Decoded physical quantities of one 5-dim output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub pos_mm: [f64; 2],
    pub theta_deg: Option<f64>,
    pub shape: ShapeClass,
}

pub fn decode_output(y: &[f64; TARGET_DIM], box_spec: &BoxSpec) -> Decoded {
    Decoded {
        pos_mm: target_to_position([y[0], y[1]], box_spec),
        theta_deg: decode_orientation(target_to_ori(y[2]), target_to_ori(y[3])),
        shape: classify_shape(y[4]),
    }
}

/// Box-plot statistics with inclusive-median quartiles: for odd counts the
/// median belongs to both halves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme values within 1.5·IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl DistributionSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let (lower, upper) = if n == 1 {
            (&v[..], &v[..])
        } else if n % 2 == 1 {
            (&v[..=n / 2], &v[n / 2..])
        } else {
            (&v[..n / 2], &v[n / 2..])
        };
        let q1 = median_sorted(lower);
        let q3 = median_sorted(upper);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = v.iter().copied().filter(|x| (lo..=hi).contains(x)).collect();
        Some(Self {
            count: n,
            mean: v.iter().sum::<f64>() / n as f64,
            min: v[0],
            q1,
            median: median_sorted(&v),
            q3,
            max: v[n - 1],
            whisker_low: inside.first().copied().unwrap_or(q1),
            whisker_high: inside.last().copied().unwrap_or(q3),
            outliers: v.iter().copied().filter(|x| !(lo..=hi).contains(x)).collect(),
        })
    }
}

/// Counts indexed `[actual][predicted]` in [`ShapeClass::ALL`] order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeConfusion {
    pub counts: [[usize; 5]; 5],
}

impl ShapeConfusion {
    pub fn add(&mut self, actual: ShapeClass, predicted: ShapeClass) {
        self.counts[actual.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..5).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    pub fn row_sums(&self) -> [usize; 5] {
        self.counts.map(|r| r.iter().sum())
    }
}

/// Confusion of raw shape outputs against raw shape targets.
pub fn shape_confusion(preds: &[f64], truths: &[f64]) -> ShapeConfusion {
    let mut m = ShapeConfusion::default();
    for (&p, &t) in preds.iter().zip(truths) {
        m.add(classify_shape(t), classify_shape(p));
    }
    m
}

/// Per-sample errors behind a [`MetricsReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub pos_error_mm: f64,
    pub ori_error_deg: Option<f64>,
    pub actual: ShapeClass,
    pub predicted: ShapeClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub pos_error_mm: Option<DistributionSummary>,
    pub ori_error_deg: Option<DistributionSummary>,
    pub shape_confusion: ShapeConfusion,
    pub accuracy: f64,
}

impl MetricsReport {
    pub fn mean_pos_error(&self) -> f64 {
        self.pos_error_mm.as_ref().map_or(f64::NAN, |d| d.mean)
    }

    pub fn mean_ori_error(&self) -> f64 {
        self.ori_error_deg.as_ref().map_or(f64::NAN, |d| d.mean)
    }
}

pub fn sample_errors(preds: &[[f64; TARGET_DIM]], truths: &[[f64; TARGET_DIM]], box_spec: &BoxSpec) -> Vec<SampleError> {
    preds
        .iter()
        .zip(truths)
        .map(|(p, t)| {
            let actual = classify_shape(t[4]);
            SampleError {
                pos_error_mm: position_error_mm([p[0], p[1]], [t[0], t[1]], box_spec),
                ori_error_deg: orientation_error_deg([p[2], p[3]], [t[2], t[3]], actual),
                actual,
                predicted: classify_shape(p[4]),
            }
        })
        .collect()
}

pub fn metrics_report(errors: &[SampleError]) -> MetricsReport {
    let pos: Vec<f64> = errors.iter().map(|e| e.pos_error_mm).collect();
    let ori: Vec<f64> = errors.iter().filter_map(|e| e.ori_error_deg).collect();
    let mut confusion = ShapeConfusion::default();
    for e in errors {
        confusion.add(e.actual, e.predicted);
    }
    MetricsReport {
        samples: errors.len(),
        pos_error_mm: DistributionSummary::from_values(&pos),
        ori_error_deg: DistributionSummary::from_values(&ori),
        accuracy: confusion.accuracy(),
        shape_confusion: confusion,
    }
}

pub fn evaluate_outputs(
    preds: &[[f64; TARGET_DIM]],
    truths: &[[f64; TARGET_DIM]],
    box_spec: &BoxSpec,
) -> Result<(MetricsReport, Vec<SampleError>)> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!("{} predictions for {} truths", preds.len(), truths.len())));
    }
    let errors = sample_errors(preds, truths, box_spec);
    Ok((metrics_report(&errors), errors))
}

pub fn write_errors_csv(path: &Path, errors: &[SampleError]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "index,pos_error_mm,ori_error_deg,actual,predicted")?;
    for (i, e) in errors.iter().enumerate() {
        let ori = e.ori_error_deg.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{i},{},{ori},{},{}", e.pos_error_mm, e.actual.name(), e.predicted.name())?;
    }
    out.flush()?;
    Ok(())
}

/// Tail statistics of two training-loss curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveComparison {
    pub epochs: usize,
    pub tail_epochs: usize,
    pub proposed_tail_mean: f64,
    pub baseline_tail_mean: f64,
    pub proposed_final: f64,
    pub baseline_final: f64,
}

/// Mean of the last `ceil(fraction · n)` values (at least one).
pub fn tail_mean(values: &[f64], fraction: f64) -> f64 {
    let k = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len().max(1));
    let tail = &values[values.len().saturating_sub(k)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

pub fn compare_curves(proposed: &[f64], baseline: &[f64], fraction: f64) -> Result<CurveComparison> {
    if proposed.is_empty() || proposed.len() != baseline.len() {
        return Err(Error::Shape(format!(
            "curves of {} and {} epochs cannot be compared",
            proposed.len(),
            baseline.len()
        )));
    }
    let n = proposed.len();
    Ok(CurveComparison {
        epochs: n,
        tail_epochs: ((n as f64 * fraction).ceil() as usize).clamp(1, n),
        proposed_tail_mean: tail_mean(proposed, fraction),
        baseline_tail_mean: tail_mean(baseline, fraction),
        proposed_final: proposed[n - 1],
        baseline_final: baseline[n - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode_orientation, ori_to_target, position_to_target, shape_label};
    use proptest::prelude::*;

    fn ori_target(theta: f64) -> [f64; 2] {
        encode_orientation(Some(theta)).map(ori_to_target)
    }

    #[test]
    fn position_error_examples() {
        let b = BoxSpec::default();
        assert_eq!(position_error_mm([0.5, 0.4], [0.5, 0.4], &b), 0.0);
        assert!((position_error_mm([0.56, 0.5], [0.5, 0.5], &b) - 10.0).abs() < 1e-9);
        assert_eq!(
            position_error_mm([0.3, 0.7], [0.6, 0.2], &b),
            position_error_mm([0.6, 0.2], [0.3, 0.7], &b)
        );
        let t = position_to_target([30.0, 40.0], &b);
        let p = position_to_target([33.0, 44.0], &b);
        assert!((position_error_mm(p, t, &b) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn orientation_error_examples() {
        let e = orientation_error_deg(ori_target(178.0), ori_target(2.0), ShapeClass::RectPrism).unwrap();
        assert!((e - 4.0).abs() < 1e-9);
        assert!(orientation_error_deg(ori_target(33.0), ori_target(33.0), ShapeClass::Cylinder).unwrap() < 1e-9);
        assert!((orientation_error_deg(ori_target(100.0), ori_target(10.0), ShapeClass::Cylinder).unwrap() - 90.0).abs() < 1e-9);
        assert_eq!(orientation_error_deg(ori_target(10.0), [0.5, 0.5], ShapeClass::SphereLarge), None);
    }

    #[test]
    fn quartiles_use_inclusive_median() {
        let d = DistributionSummary::from_values(&[6.0, 7.0, 15.0, 36.0, 39.0, 40.0, 41.0, 42.0, 43.0, 47.0, 49.0]).unwrap();
        assert_eq!((d.q1, d.median, d.q3), (25.5, 40.0, 42.5));
        let d = DistributionSummary::from_values(&[7.0, 15.0, 36.0, 39.0, 40.0, 41.0]).unwrap();
        assert_eq!((d.q1, d.median, d.q3), (15.0, 37.5, 40.0));
        let d = DistributionSummary::from_values(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(d.outliers, vec![100.0]);
        assert_eq!(d.whisker_high, 4.0);
        assert_eq!(d.mean, 22.0);
        assert!(DistributionSummary::from_values(&[]).is_none());
    }

    #[test]
    fn confusion_examples() {
        let labels: Vec<f64> = ShapeClass::ALL.iter().map(|&c| shape_label(c)).collect();
        let m = shape_confusion(&labels, &labels);
        assert_eq!(m.accuracy(), 1.0);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m.counts[i][j], usize::from(i == j));
            }
        }
        let m = shape_confusion(&[0.8], &[0.2]);
        assert_eq!(m.counts[0][4], 1);
        assert_eq!(m.accuracy(), 0.0);
    }

    #[test]
    fn curve_tails() {
        let a: Vec<f64> = (0..20).map(|i| 20.0 - i as f64).collect();
        let c = compare_curves(&a, &a, 0.1).unwrap();
        assert_eq!(c.tail_epochs, 2);
        assert_eq!(c.proposed_tail_mean, 1.5);
        assert!(compare_curves(&a, &a[..3], 0.1).is_err());
    }

    proptest! {
        #[test]
        fn summary_is_ordered(v in prop::collection::vec(-1e3f64..1e3, 1..60)) {
            let d = DistributionSummary::from_values(&v).unwrap();
            prop_assert!(d.min <= d.q1 && d.q1 <= d.median && d.median <= d.q3 && d.q3 <= d.max);
            prop_assert!(d.whisker_low >= d.min && d.whisker_high <= d.max);
        }

        #[test]
        fn confusion_rows_match_class_counts(p in prop::collection::vec(0.0f64..1.0, 0..50), seed in 0u64..100) {
            let t: Vec<f64> = p.iter().enumerate().map(|(i, _)| shape_label(ShapeClass::ALL[(i + seed as usize) % 5])).collect();
            let m = shape_confusion(&p, &t);
            let mut expected = [0usize; 5];
            for &v in &t {
                expected[classify_shape(v).index()] += 1;
            }
            prop_assert_eq!(m.row_sums(), expected);
            prop_assert_eq!(m.total(), p.len());
            if !p.is_empty() {
                prop_assert!((m.accuracy() - m.correct() as f64 / p.len() as f64).abs() < 1e-15);
            }
        }

        #[test]
        fn orientation_error_is_bounded(a in 0.0f64..180.0, b in 0.0f64..180.0) {
            let e = orientation_error_deg(ori_target(a), ori_target(b), ShapeClass::RectPrism).unwrap();
            prop_assert!((0.0..=90.0 + 1e-9).contains(&e));
        }
    }
}
