use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::sim::{DT, SAMPLE_RATE_HZ};

/// Reachable region for the box pose: position offsets around a home point
/// (mm) and angle limits (deg).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub home: [f64; 3],
    pub half_range: [f64; 3],
    pub max_yaw: f64,
    pub max_tilt: f64,
    pub segment_min: f64,
    pub segment_max: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            home: [400.0, -200.0, 300.0],
            half_range: [80.0, 80.0, 50.0],
            max_yaw: 30.0,
            max_tilt: 20.0,
            segment_min: 1.0,
            segment_max: 2.0,
        }
    }
}

/// Commanded box pose `(x, y, z [mm], yaw, pitch, roll [deg])` with its first
/// and second time derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub time: f64,
    pub pose: [f64; 6],
    pub vel: [f64; 6],
    pub acc: [f64; 6],
}

impl PoseSample {
    pub fn stationary(time: f64, pose: [f64; 6]) -> Self {
        Self {
            time,
            pose,
            vel: [0.0; 6],
            acc: [0.0; 6],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Waypoint poses; segment `i` runs from `waypoints[i]` to `waypoints[i+1]`.
    pub waypoints: Vec<[f64; 6]>,
    /// Segment boundary times, one more than the number of segments.
    pub knots: Vec<f64>,
    pub samples: Vec<PoseSample>,
}

/// Minimum-jerk blend `10s³ − 15s⁴ + 6s⁵` and its first two derivatives.
fn min_jerk(s: f64) -> (f64, f64, f64) {
    let (s2, s3) = (s * s, s * s * s);
    (
        10.0 * s3 - 15.0 * s3 * s + 6.0 * s3 * s2,
        30.0 * s2 - 60.0 * s3 + 30.0 * s2 * s2,
        60.0 * s - 180.0 * s2 + 120.0 * s3,
    )
}

impl Trajectory {
    /// Pose, velocity and acceleration at time `t`.
    pub fn eval(&self, t: f64) -> PoseSample {
        let last = self.knots.len() - 2;
        let seg = self.knots[1..].iter().position(|&k| t < k).unwrap_or(last).min(last);
        let (t0, t1) = (self.knots[seg], self.knots[seg + 1]);
        let span = t1 - t0;
        let s = ((t - t0) / span).clamp(0.0, 1.0);
        let (b, db, ddb) = min_jerk(s);
        let (p0, p1) = (&self.waypoints[seg], &self.waypoints[seg + 1]);
        let mut out = PoseSample::stationary(t, [0.0; 6]);
        for i in 0..6 {
            let d = p1[i] - p0[i];
            out.pose[i] = p0[i] + d * b;
            out.vel[i] = d * db / span;
            out.acc[i] = d * ddb / (span * span);
        }
        out
    }
}

/// Random point-to-point swing sampled at 50 Hz, starting level at home.
pub fn plan_trajectory(seed: u64, duration: f64, ws: &Workspace) -> Trajectory {
    let mut rng = Rng::new(seed);
    let n = (duration * SAMPLE_RATE_HZ).round() as usize;
    let home = [ws.home[0], ws.home[1], ws.home[2], 0.0, 0.0, 0.0];
    let mut waypoints = vec![home];
    let mut knots = vec![0.0];
    let end = n as f64 * DT;
    while *knots.last().expect("non-empty") <= end {
        let t = knots.last().expect("non-empty") + rng.range(ws.segment_min, ws.segment_max);
        knots.push(t);
        waypoints.push([
            ws.home[0] + rng.range(-ws.half_range[0], ws.half_range[0]),
            ws.home[1] + rng.range(-ws.half_range[1], ws.half_range[1]),
            ws.home[2] + rng.range(-ws.half_range[2], ws.half_range[2]),
            rng.range(-ws.max_yaw, ws.max_yaw),
            rng.range(-ws.max_tilt, ws.max_tilt),
            rng.range(-ws.max_tilt, ws.max_tilt),
        ]);
    }
    let mut traj = Trajectory {
        waypoints,
        knots,
        samples: Vec::new(),
    };
    traj.samples = (0..n).map(|k| traj.eval(k as f64 * DT)).collect();
    traj
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_seconds_is_thousand_samples() {
        let t = plan_trajectory(1, 20.0, &Workspace::default());
        assert_eq!(t.samples.len(), 1000);
        assert!((t.samples[999].time - 19.98).abs() < 1e-12);
    }

    #[test]
    fn seed_determinism() {
        let ws = Workspace::default();
        assert_eq!(plan_trajectory(4, 5.0, &ws), plan_trajectory(4, 5.0, &ws));
        assert_ne!(plan_trajectory(4, 5.0, &ws).waypoints, plan_trajectory(5, 5.0, &ws).waypoints);
    }

    #[test]
    fn segment_endpoints_at_rest() {
        let t = plan_trajectory(2, 20.0, &Workspace::default());
        for w in t.knots.windows(2) {
            assert!((1.0..=2.0).contains(&(w[1] - w[0])));
        }
        for (i, &k) in t.knots.iter().enumerate().skip(1) {
            let seg = i - 1;
            let (t0, t1) = (t.knots[seg], t.knots[seg + 1]);
            let (_, db0, _) = min_jerk(0.0);
            let (_, db1, _) = min_jerk(1.0);
            for j in 0..6 {
                let d = t.waypoints[seg + 1][j] - t.waypoints[seg][j];
                assert!((d * db0 / (t1 - t0)).abs() < 1e-9);
                assert!((d * db1 / (t1 - t0)).abs() < 1e-9);
            }
            // Continuity of pose across the knot.
            let before = t.eval(k - 1e-9);
            let after = t.eval(k + 1e-9);
            for j in 0..6 {
                assert!((before.pose[j] - after.pose[j]).abs() < 1e-5);
                assert!((before.vel[j] - after.vel[j]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn tilt_within_limits() {
        let ws = Workspace::default();
        let t = plan_trajectory(3, 20.0, &ws);
        for s in &t.samples {
            assert!(s.pose[4].abs() <= ws.max_tilt + 1e-9 && s.pose[5].abs() <= ws.max_tilt + 1e-9);
        }
    }
}
