//! Sensor synthesis: end-effector pose, wrist force/torque, 4×4 tactile
//! cells and two piezo microphone envelopes, all at the 50 Hz step rate.

use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::sim::dynamics::{world_to_box, ContactEvent, SimState, StepOutput, Wall};
use crate::sim::spec::{BoxSpec, ObjectSpec};
use crate::sim::trajectory::PoseSample;
use crate::sim::{PhysicsConfig, DT};

pub const TACTILE_CELLS: usize = 16;
pub const MIC_CHANNELS: usize = 2;
pub const CHANNELS: usize = 6 + 6 + TACTILE_CELLS + MIC_CHANNELS;

/// Transients older than this are dropped from the registry.
const TRANSIENT_HORIZON_S: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub time: f64,
    /// `(x, y, z [mm], yaw, pitch, roll [deg])`.
    pub ee_pose: [f64; 6],
    /// Force (N) then torque (N·m) in the box frame about the floor centre.
    pub ft: [f64; 6],
    pub tactile: [f64; TACTILE_CELLS],
    pub mic: [f64; MIC_CHANNELS],
}

impl SensorFrame {
    /// Channel order: pose 6, force/torque 6, tactile 16, mic 2.
    pub fn channels(&self) -> [f64; CHANNELS] {
        let mut out = [0.0; CHANNELS];
        out[..6].copy_from_slice(&self.ee_pose);
        out[6..12].copy_from_slice(&self.ft);
        out[12..28].copy_from_slice(&self.tactile);
        out[28..].copy_from_slice(&self.mic);
        out
    }
}

/// Recent contacts whose decaying transients are still audible/felt.
#[derive(Clone, Debug, Default)]
pub struct TransientRegistry {
    events: Vec<ContactEvent>,
}

impl TransientRegistry {
    pub fn record(&mut self, contacts: &[ContactEvent]) {
        if let Some(latest) = contacts.iter().map(|c| c.time).reduce(f64::max) {
            self.events.retain(|e| latest - e.time <= TRANSIENT_HORIZON_S);
        }
        self.events.extend(contacts.iter().cloned());
    }

    pub fn active(&self) -> &[ContactEvent] {
        &self.events
    }
}

/// Static tactile response per cell at the reference grip of 20 N.
pub fn tactile_base(cell: usize) -> f64 {
    let (pad, unit) = (cell / 4, cell % 4);
    (0.8 + 0.1 * unit as f64) * (1.0 + 0.05 * pad as f64)
}

/// How strongly a cell feels an impact on `wall`.
pub fn tactile_gain(cell: usize, wall: Wall) -> f64 {
    let (pad, unit) = (cell / 4, cell % 4);
    let w = match wall {
        Wall::PosX => (unit + 1) as f64 / 4.0,
        Wall::NegX => (4 - unit) as f64 / 4.0,
        Wall::PosY => if pad < 2 { 1.0 } else { 0.3 },
        Wall::NegY => if pad < 2 { 0.3 } else { 1.0 },
    };
    0.3 + 0.7 * w
}

/// How strongly each microphone hears an impact on `wall`.
pub fn mic_gain(wall: Wall, channel: usize) -> f64 {
    const TABLE: [[f64; MIC_CHANNELS]; 4] = [[1.0, 0.35], [0.35, 1.0], [0.8, 0.5], [0.5, 0.8]];
    TABLE[wall.index()][channel]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Synthesises one frame for the state reached by `step`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_sensors(
    state: &SimState,
    cmd: &PoseSample,
    step: &StepOutput,
    registry: &TransientRegistry,
    box_spec: &BoxSpec,
    object: &ObjectSpec,
    physics: &PhysicsConfig,
    noise: &mut Rng,
) -> SensorFrame {
    let g_box = world_to_box(&cmd.pose, [0.0, 0.0, -physics.gravity]);
    let a_box = world_to_box(&cmd.pose, [cmd.acc[0], cmd.acc[1], cmd.acc[2]]);
    let eff = [g_box[0] - a_box[0], g_box[1] - a_box[1], g_box[2] - a_box[2]];

    // mm/s² · kg → N
    let f_box = eff.map(|e| box_spec.box_mass * e / 1000.0);
    let f_obj = [
        object.mass * (eff[0] - step.rel_accel[0]) / 1000.0,
        object.mass * (eff[1] - step.rel_accel[1]) / 1000.0,
        object.mass * eff[2] / 1000.0,
    ];
    let h = object.footprint.center_height();
    let centre = [box_spec.interior_x / 2.0, box_spec.interior_y / 2.0];
    let r_box = [0.0, 0.0, box_spec.interior_z / 2.0];
    let r_obj = [state.obj_pos[0] - centre[0], state.obj_pos[1] - centre[1], h];

    let mut force = [0.0; 3];
    let mut torque = [0.0; 3];
    for (r, f) in [(r_box, f_box), (r_obj, f_obj)] {
        let t = cross(r, f);
        for i in 0..3 {
            force[i] += f[i];
            torque[i] += t[i] / 1000.0;
        }
    }
    for c in &step.contacts {
        let n = c.wall.normal();
        let spike = [n[0] * c.impulse / DT, n[1] * c.impulse / DT, 0.0];
        let r = [c.location[0] - centre[0], c.location[1] - centre[1], h];
        let t = cross(r, spike);
        for i in 0..3 {
            force[i] += spike[i];
            torque[i] += t[i] / 1000.0;
        }
    }

    let mut ft = [0.0; 6];
    for i in 0..3 {
        ft[i] = force[i] + physics.sigma_ft * noise.normal();
        ft[3 + i] = torque[i] + physics.sigma_torque * noise.normal();
    }

    let grip_scale = physics.grip_force / 20.0;
    let mut tactile = [0.0; TACTILE_CELLS];
    for (cell, v) in tactile.iter_mut().enumerate() {
        *v = tactile_base(cell) * grip_scale;
    }
    let mut mic = [0.0; MIC_CHANNELS];
    for e in registry.active() {
        let age = state.time - e.time;
        if age < 0.0 {
            continue;
        }
        let tac = physics.tactile_gain
            * e.impulse
            * (-age / physics.tau_tactile).exp()
            * (std::f64::consts::TAU * physics.tactile_freq * age).cos();
        for (cell, v) in tactile.iter_mut().enumerate() {
            *v += tac * tactile_gain(cell, e.wall);
        }
        let env = physics.mic_gain * e.impulse * (-age / physics.tau_mic).exp();
        for (ch, m) in mic.iter_mut().enumerate() {
            *m += env * mic_gain(e.wall, ch);
        }
    }
    for m in &mut mic {
        *m += physics.sigma_mic * noise.normal();
    }

    SensorFrame {
        time: state.time,
        ee_pose: cmd.pose,
        ft,
        tactile,
        mic,
    }
}
