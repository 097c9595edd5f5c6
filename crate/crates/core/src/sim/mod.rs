//! Planar simulation of one object inside a box swung by a robot arm,
//! producing ground truth, 30-channel sensor frames and top-down images.

pub mod dynamics;
pub mod render;
pub mod sensors;
pub mod spec;
pub mod trajectory;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::{derive_seed, Rng};

pub use dynamics::{step_dynamics, ContactEvent, SimState, StepOutput, Wall};
pub use render::{render_topdown, RgbImage, IMAGE_SIZE};
pub use sensors::{synthesize_sensors, SensorFrame, TransientRegistry, CHANNELS};
pub use spec::{make_object_set, BoxSpec, Footprint, ObjectSpec, ShapeClass};
pub use trajectory::{plan_trajectory, PoseSample, Trajectory, Workspace};

/// Sensor and integration rate.
pub const SAMPLE_RATE_HZ: f64 = 50.0;
pub const DT: f64 = 1.0 / SAMPLE_RATE_HZ;

/// Physical and sensor-model constants. Lengths in mm, masses in kg,
/// time in s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConfig {
    pub gravity: f64,
    pub grip_force: f64,
    pub tau_mic: f64,
    pub sigma_ft: f64,
    pub sigma_torque: f64,
    pub sigma_mic: f64,
    /// Mic envelope amplitude per N·s of impulse.
    pub mic_gain: f64,
    pub tactile_gain: f64,
    pub tau_tactile: f64,
    pub tactile_freq: f64,
    /// Yaw acceleration of a rolling cylinder per unit axial drive, 1/mm.
    pub rolling_drift: f64,
    /// Lateral speed at which rolling drift reaches half strength, mm/s.
    pub rolling_ref_speed: f64,
    /// Scale of the spin-friction deceleration relative to μ·g/ρ.
    pub spin_friction: f64,
    /// Wall approach speeds below this are absorbed silently (resting
    /// contact), mm/s.
    pub contact_min_speed: f64,
    pub workspace: Workspace,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            gravity: 9810.0,
            grip_force: 20.0,
            tau_mic: 0.06,
            sigma_ft: 0.05,
            sigma_torque: 0.002,
            sigma_mic: 0.01,
            mic_gain: 20.0,
            tactile_gain: 10.0,
            tau_tactile: 0.1,
            tactile_freq: 7.0,
            rolling_drift: 0.01,
            rolling_ref_speed: 20.0,
            spin_friction: 0.6,
            contact_min_speed: 10.0,
            workspace: Workspace::default(),
        }
    }
}

impl PhysicsConfig {
    /// Same constants with all sensor noise disabled.
    pub fn noiseless(&self) -> Self {
        Self {
            sigma_ft: 0.0,
            sigma_torque: 0.0,
            sigma_mic: 0.0,
            ..self.clone()
        }
    }
}

/// Full record of one simulated run.
#[derive(Clone, Debug)]
pub struct SimRun {
    pub frames: Vec<SensorFrame>,
    /// State after each step, aligned with `frames`.
    pub states: Vec<SimState>,
    pub contacts: Vec<ContactEvent>,
}

/// Random resting placement of `object` on a level floor.
pub fn random_placement(box_spec: &BoxSpec, object: &ObjectSpec, rng: &mut Rng) -> SimState {
    let theta = object.shape.is_oriented().then(|| rng.range(0.0, 180.0));
    let (ex, ey) = object.footprint.extents(theta.unwrap_or(0.0).to_radians());
    let x = rng.range(ex, box_spec.interior_x - ex);
    let y = rng.range(ey, box_spec.interior_y - ey);
    SimState::at_rest([x, y], theta)
}

/// Simulates `steps` frames of a random swing. The seed fully determines the
/// trajectory, the initial placement and the sensor noise.
pub fn simulate_run(
    box_spec: &BoxSpec,
    object: &ObjectSpec,
    physics: &PhysicsConfig,
    seed: u64,
    steps: usize,
) -> Result<SimRun> {
    let trajectory = plan_trajectory(derive_seed(seed, 0), steps as f64 * DT, &physics.workspace);
    let mut placement_rng = Rng::new(derive_seed(seed, 1));
    let initial = random_placement(box_spec, object, &mut placement_rng);
    simulate_from(box_spec, object, physics, &trajectory, initial, derive_seed(seed, 2))
}

/// Steps the simulation along a planned trajectory from `initial`.
pub fn simulate_from(
    box_spec: &BoxSpec,
    object: &ObjectSpec,
    physics: &PhysicsConfig,
    trajectory: &Trajectory,
    initial: SimState,
    noise_seed: u64,
) -> Result<SimRun> {
    let n = trajectory.samples.len();
    let mut run = SimRun {
        frames: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        contacts: Vec::new(),
    };
    for step in SimStream::new(box_spec, object, physics, trajectory, initial, noise_seed) {
        let step = step?;
        run.contacts.extend(step.contacts);
        run.frames.push(step.frame);
        run.states.push(step.state);
    }
    Ok(run)
}

/// One simulated sample.
#[derive(Clone, Debug)]
pub struct SimStep {
    pub frame: SensorFrame,
    pub state: SimState,
    pub contacts: Vec<ContactEvent>,
}

/// Frame-by-frame simulation along a trajectory. Yields one [`SimStep`] per
/// trajectory sample and stops after the first integration fault.
pub struct SimStream<'a> {
    box_spec: &'a BoxSpec,
    object: &'a ObjectSpec,
    physics: &'a PhysicsConfig,
    trajectory: &'a Trajectory,
    state: SimState,
    registry: TransientRegistry,
    noise: Rng,
    k: usize,
    failed: bool,
}

impl<'a> SimStream<'a> {
    pub fn new(
        box_spec: &'a BoxSpec,
        object: &'a ObjectSpec,
        physics: &'a PhysicsConfig,
        trajectory: &'a Trajectory,
        initial: SimState,
        noise_seed: u64,
    ) -> Self {
        Self {
            box_spec,
            object,
            physics,
            trajectory,
            state: initial,
            registry: TransientRegistry::default(),
            noise: Rng::new(noise_seed),
            k: 0,
            failed: false,
        }
    }
}

impl Iterator for SimStream<'_> {
    type Item = Result<SimStep>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let cmd = self.trajectory.samples.get(self.k)?;
        let out = match step_dynamics(&self.state, cmd, self.box_spec, self.object, self.physics, DT) {
            Ok(out) => out,
            Err(e) => {
                self.failed = true;
                return Some(Err(e));
            }
        };
        self.state = out.state.clone();
        self.state.time = self.k as f64 * DT;
        self.registry.record(&out.contacts);
        let frame = synthesize_sensors(
            &self.state,
            cmd,
            &out,
            &self.registry,
            self.box_spec,
            self.object,
            self.physics,
            &mut self.noise,
        );
        self.k += 1;
        Some(Ok(SimStep {
            frame,
            state: self.state.clone(),
            contacts: out.contacts,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_are_bit_deterministic() {
        let (train, _) = make_object_set();
        let b = BoxSpec::default();
        let p = PhysicsConfig::default();
        let a = simulate_run(&b, &train[4], &p, 99, 300).unwrap();
        let c = simulate_run(&b, &train[4], &p, 99, 300).unwrap();
        assert_eq!(a.frames, c.frames);
        assert_eq!(a.states, c.states);
        let d = simulate_run(&b, &train[4], &p, 100, 300).unwrap();
        assert_ne!(a.frames, d.frames);
    }

    #[test]
    fn contacts_align_with_mic_onsets() {
        let (train, _) = make_object_set();
        let b = BoxSpec::default();
        let p = PhysicsConfig::default().noiseless();
        let mut onsets = 0;
        for seed in 0..6 {
            let run = simulate_run(&b, &train[5], &p, seed, 500).unwrap();
            let mut prev = 0.0f64;
            for (k, frame) in run.frames.iter().enumerate() {
                let level = frame.mic[0] + frame.mic[1];
                let decayed = prev * (-DT / p.tau_mic).exp();
                let contact_here = run.contacts.iter().any(|c| (c.time - k as f64 * DT).abs() < 1e-9);
                if level > decayed + 1e-9 {
                    onsets += 1;
                    assert!(contact_here, "mic onset without contact at step {k}");
                }
                prev = level;
            }
        }
        assert!(onsets > 0, "no impacts at all in six runs");
    }

    #[test]
    fn shape_dependent_mobility() {
        let (train, _) = make_object_set();
        let b = BoxSpec::default();
        let p = PhysicsConfig::default();
        let path_len = |obj: &ObjectSpec| -> f64 {
            (0..100u64)
                .map(|seed| {
                    let run = simulate_run(&b, obj, &p, 5000 + seed, 500).unwrap();
                    run.states
                        .windows(2)
                        .map(|w| {
                            let dx = w[1].obj_pos[0] - w[0].obj_pos[0];
                            let dy = w[1].obj_pos[1] - w[0].obj_pos[1];
                            dx.hypot(dy)
                        })
                        .sum::<f64>()
                })
                .sum::<f64>()
                / 100.0
        };
        let class_mean = |pred: fn(ShapeClass) -> bool| {
            let objs: Vec<_> = train.iter().filter(|o| pred(o.shape)).collect();
            objs.iter().map(|o| path_len(o)).sum::<f64>() / objs.len() as f64
        };
        let prism = class_mean(|c| c == ShapeClass::RectPrism);
        let cylinder = class_mean(|c| c == ShapeClass::Cylinder);
        let sphere = class_mean(ShapeClass::is_sphere);
        eprintln!("sphere {sphere}, cylinder {cylinder}, prism {prism}");
        assert!(sphere > cylinder && cylinder > prism, "sphere {sphere}, cylinder {cylinder}, prism {prism}");
    }
}
