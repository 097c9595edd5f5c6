//! Semi-implicit Euler integration of the object in the (non-inertial) box
//! floor frame, with Coulomb friction and one wall-collision pass per step.
//!
//! Floor frame: origin at an interior corner, x in `[0, interior_x]`,
//! y in `[0, interior_y]`. Orientation is the angle of the object's long axis
//! from +x, in degrees, folded to `[0, 180)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::spec::{BoxSpec, Footprint, ObjectSpec, ShapeClass};
use crate::sim::trajectory::PoseSample;
use crate::sim::PhysicsConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Wall {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::PosX, Wall::NegX, Wall::PosY, Wall::NegY];

    /// Outward normal in the floor frame.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Wall::PosX => [1.0, 0.0],
            Wall::NegX => [-1.0, 0.0],
            Wall::PosY => [0.0, 1.0],
            Wall::NegY => [0.0, -1.0],
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub wall: Wall,
    /// Impulse magnitude in N·s.
    pub impulse: f64,
    /// Contact point in the floor frame, mm.
    pub location: [f64; 2],
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// World pose `(x, y, z [mm], yaw, pitch, roll [deg])`.
    pub box_pose: [f64; 6],
    pub box_velocity: [f64; 6],
    pub obj_pos: [f64; 2],
    pub obj_vel: [f64; 2],
    /// `None` for spheres.
    pub obj_theta: Option<f64>,
    /// deg/s.
    pub obj_omega: f64,
    pub time: f64,
}

impl SimState {
    pub fn at_rest(obj_pos: [f64; 2], obj_theta: Option<f64>) -> Self {
        Self {
            box_pose: [0.0; 6],
            box_velocity: [0.0; 6],
            obj_pos,
            obj_vel: [0.0; 2],
            obj_theta,
            obj_omega: 0.0,
            time: 0.0,
        }
    }

    pub fn kinetic_energy(&self, object: &ObjectSpec) -> f64 {
        let w = self.obj_omega.to_radians();
        let v2 = self.obj_vel[0].powi(2) + self.obj_vel[1].powi(2);
        0.5 * object.mass * (v2 + object.footprint.inertia_per_mass() * w * w)
    }
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub state: SimState,
    pub contacts: Vec<ContactEvent>,
    /// Object acceleration relative to the box from drive and friction
    /// (collisions excluded), mm/s².
    pub rel_accel: [f64; 2],
}

/// Expresses a world-frame vector in the box frame, where the box rotation
/// is `Rz(yaw)·Ry(pitch)·Rx(roll)`.
pub fn world_to_box(pose: &[f64; 6], v: [f64; 3]) -> [f64; 3] {
    let (sy, cy) = pose[3].to_radians().sin_cos();
    let (sp, cp) = pose[4].to_radians().sin_cos();
    let (sr, cr) = pose[5].to_radians().sin_cos();
    // Rz(-yaw)
    let a = [cy * v[0] + sy * v[1], -sy * v[0] + cy * v[1], v[2]];
    // Ry(-pitch)
    let b = [cp * a[0] - sp * a[2], a[1], sp * a[0] + cp * a[2]];
    // Rx(-roll)
    [b[0], cr * b[1] + sr * b[2], -sr * b[1] + cr * b[2]]
}

/// Proximal map of `|·|` friction: shrinks `v` toward zero by `limit`.
fn shrink(v: f64, limit: f64) -> f64 {
    if v.abs() <= limit {
        0.0
    } else {
        v - limit * v.signum()
    }
}

fn shrink2(v: [f64; 2], limit: f64) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n <= limit {
        [0.0, 0.0]
    } else {
        let k = 1.0 - limit / n;
        [v[0] * k, v[1] * k]
    }
}

fn fold_degrees(deg: f64) -> f64 {
    let d = deg.rem_euclid(180.0);
    if d >= 180.0 {
        0.0
    } else {
        d
    }
}

/// Offset from the object centre to its support point toward `n`.
fn support_offset(fp: &Footprint, theta: f64, n: [f64; 2]) -> [f64; 2] {
    const TIE: f64 = 1e-9;
    let u = [theta.cos(), theta.sin()];
    let w = [-u[1], u[0]];
    match *fp {
        Footprint::Prism { width, length, .. } => {
            let (a, b) = (length / 2.0, width / 2.0);
            let corners = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                .map(|(i, j)| [i * a * u[0] + j * b * w[0], i * a * u[1] + j * b * w[1]]);
            let depth = |c: &[f64; 2]| c[0] * n[0] + c[1] * n[1];
            let max = corners.iter().map(depth).fold(f64::NEG_INFINITY, f64::max);
            let support: Vec<&[f64; 2]> = corners.iter().filter(|c| depth(c) >= max - TIE).collect();
            let k = support.len() as f64;
            [
                support.iter().map(|c| c[0]).sum::<f64>() / k,
                support.iter().map(|c| c[1]).sum::<f64>() / k,
            ]
        }
        Footprint::Cylinder { radius, length } => {
            let a = length / 2.0 - radius;
            let un = u[0] * n[0] + u[1] * n[1];
            let s = if un.abs() < TIE { 0.0 } else { un.signum() };
            [s * a * u[0] + radius * n[0], s * a * u[1] + radius * n[1]]
        }
        Footprint::Sphere { radius } => [radius * n[0], radius * n[1]],
    }
}

/// Advances the object one step under the commanded box motion `cmd`.
pub fn step_dynamics(
    state: &SimState,
    cmd: &PoseSample,
    box_spec: &BoxSpec,
    object: &ObjectSpec,
    physics: &PhysicsConfig,
    dt: f64,
) -> Result<StepOutput> {
    let g_box = world_to_box(&cmd.pose, [0.0, 0.0, -physics.gravity]);
    let a_box = world_to_box(&cmd.pose, [cmd.acc[0], cmd.acc[1], cmd.acc[2]]);
    let drive = [g_box[0] - a_box[0], g_box[1] - a_box[1]];
    let normal_accel = (a_box[2] - g_box[2]).max(0.0);

    let oriented = object.shape.is_oriented();
    let mut theta = state.obj_theta.unwrap_or(0.0).to_radians();
    let mut omega = if oriented { state.obj_omega.to_radians() } else { 0.0 };
    let axis = [theta.cos(), theta.sin()];
    let across = [-axis[1], axis[0]];

    let v_old = state.obj_vel;
    let v_free = [v_old[0] + drive[0] * dt, v_old[1] + drive[1] * dt];
    let mut v = if object.is_isotropic() {
        shrink2(v_free, object.friction_long * normal_accel * dt)
    } else {
        let along = shrink(v_free[0] * axis[0] + v_free[1] * axis[1], object.friction_long * normal_accel * dt);
        let lat = shrink(v_free[0] * across[0] + v_free[1] * across[1], object.friction_lat * normal_accel * dt);
        [along * axis[0] + lat * across[0], along * axis[1] + lat * across[1]]
    };
    let rel_accel = [(v[0] - v_old[0]) / dt, (v[1] - v_old[1]) / dt];

    if oriented {
        if object.shape == ShapeClass::Cylinder {
            let axial_drive = drive[0] * axis[0] + drive[1] * axis[1];
            let v_lat = v[0] * across[0] + v[1] * across[1];
            omega += physics.rolling_drift * axial_drive * v_lat / (v_lat.abs() + physics.rolling_ref_speed) * dt;
        }
        let rho = object.footprint.inertia_per_mass().sqrt();
        let mu_spin = object.friction_long.min(object.friction_lat);
        omega = shrink(omega, physics.spin_friction * mu_spin * normal_accel * dt / rho);
    }

    let mut pos = [state.obj_pos[0] + v[0] * dt, state.obj_pos[1] + v[1] * dt];
    let theta_moved = omega != 0.0;
    theta += omega * dt;

    let (ex, ey) = object.footprint.extents(theta);
    let bounds = [(ex, box_spec.interior_x - ex), (ey, box_spec.interior_y - ey)];
    let inertia = object.mass * object.footprint.inertia_per_mass();
    let mut contacts = Vec::new();
    for (axis_idx, &(lo, hi)) in bounds.iter().enumerate() {
        if hi < lo {
            return Err(Error::Integration(format!(
                "{} does not fit along axis {axis_idx} at {:.2} deg",
                object.id,
                theta.to_degrees()
            )));
        }
        let wall = if pos[axis_idx] > hi {
            pos[axis_idx] = hi;
            if axis_idx == 0 { Wall::PosX } else { Wall::PosY }
        } else if pos[axis_idx] < lo {
            pos[axis_idx] = lo;
            if axis_idx == 0 { Wall::NegX } else { Wall::NegY }
        } else {
            continue;
        };
        let n = wall.normal();
        let r = support_offset(&object.footprint, theta, n);
        let r_cross_n = if oriented { r[0] * n[1] - r[1] * n[0] } else { 0.0 };
        let v_contact = [v[0] - omega * r[1], v[1] + omega * r[0]];
        let v_n = v_contact[0] * n[0] + v_contact[1] * n[1];
        if v_n <= 0.0 {
            continue;
        }
        // Approach speeds a step or so of driving can build up count as
        // resting contact rather than an impact.
        let drive_n = (drive[0] * n[0] + drive[1] * n[1]).max(0.0);
        if v_n < physics.contact_min_speed.max(1.5 * drive_n * dt) {
            let v_c = v[0] * n[0] + v[1] * n[1];
            if v_c > 0.0 {
                v[0] -= v_c * n[0];
                v[1] -= v_c * n[1];
            }
            continue;
        }
        let eff_inv_mass = 1.0 / object.mass + r_cross_n * r_cross_n / inertia;
        let j = (1.0 + object.restitution) * v_n / eff_inv_mass;
        v[0] -= j / object.mass * n[0];
        v[1] -= j / object.mass * n[1];
        if oriented {
            omega -= r_cross_n * j / inertia;
        }
        contacts.push(ContactEvent {
            wall,
            impulse: j / 1000.0,
            location: [pos[0] + r[0], pos[1] + r[1]],
            time: cmd.time,
        });
    }

    if !(pos.iter().chain(&v).all(|x| x.is_finite()) && omega.is_finite()) {
        return Err(Error::Integration(format!("non-finite state for {}", object.id)));
    }
    const TOL: f64 = 1e-6;
    for (axis_idx, &(lo, hi)) in bounds.iter().enumerate() {
        if pos[axis_idx] < lo - TOL || pos[axis_idx] > hi + TOL {
            return Err(Error::Integration(format!(
                "{} left the interior along axis {axis_idx}: {:.4}",
                object.id, pos[axis_idx]
            )));
        }
    }

    Ok(StepOutput {
        state: SimState {
            box_pose: cmd.pose,
            box_velocity: cmd.vel,
            obj_pos: pos,
            obj_vel: v,
            obj_theta: oriented.then(|| match state.obj_theta {
                Some(t) if !theta_moved => fold_degrees(t),
                _ => fold_degrees(theta.to_degrees()),
            }),
            obj_omega: if oriented { omega.to_degrees() } else { 0.0 },
            time: cmd.time,
        },
        contacts,
        rel_accel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::sim::spec::make_object_set;
    use crate::sim::DT;

    fn level(time: f64) -> PoseSample {
        PoseSample::stationary(time, [0.0; 6])
    }

    #[test]
    fn equilibrium_is_unchanged() {
        let (train, _) = make_object_set();
        let b = BoxSpec::default();
        let p = PhysicsConfig::default();
        for obj in &train {
            let theta = obj.shape.is_oriented().then_some(30.0);
            let s = SimState::at_rest([50.0, 60.0], theta);
            let out = step_dynamics(&s, &level(0.0), &b, obj, &p, DT).unwrap();
            assert_eq!(out.state.obj_pos, s.obj_pos);
            assert_eq!(out.state.obj_vel, [0.0, 0.0]);
            assert_eq!(out.state.obj_theta, theta);
            assert!(out.contacts.is_empty());
        }
    }

    #[test]
    fn tilted_sphere_single_step() {
        let sphere = make_object_set().0[4].clone();
        let p = PhysicsConfig::default();
        let phi: f64 = 10.0;
        assert!(phi.to_radians().tan() > sphere.friction_long);
        let cmd = PoseSample::stationary(0.0, [0.0, 0.0, 0.0, 0.0, phi, 0.0]);
        let s = SimState::at_rest([50.0, 60.0], None);
        let out = step_dynamics(&s, &cmd, &BoxSpec::default(), &sphere, &p, DT).unwrap();
        let (sp, cp) = phi.to_radians().sin_cos();
        let want = (p.gravity * sp - sphere.friction_long * p.gravity * cp) * DT;
        assert!((out.state.obj_vel[0] - want).abs() < 1e-9, "{:?} vs {want}", out.state.obj_vel);
        assert!(out.state.obj_vel[1].abs() < 1e-12);
    }

    #[test]
    fn restitution_on_wall_hit() {
        let mut sphere = make_object_set().0[4].clone();
        sphere.friction_long = 0.0;
        sphere.friction_lat = 0.0;
        let p = PhysicsConfig::default();
        let b = BoxSpec::default();
        let v = 300.0;
        let r = 25.0;
        let mut s = SimState::at_rest([b.interior_x - r - 1.0, 60.0], None);
        s.obj_vel = [v, 0.0];
        let out = step_dynamics(&s, &level(0.4), &b, &sphere, &p, DT).unwrap();
        assert!((out.state.obj_vel[0] + sphere.restitution * v).abs() < 1e-9);
        assert_eq!(out.contacts.len(), 1);
        let c = &out.contacts[0];
        assert_eq!(c.wall, Wall::PosX);
        let want = sphere.mass * (1.0 + sphere.restitution) * v / 1000.0;
        assert!((c.impulse - want).abs() < 1e-12);
        assert_eq!(c.time, 0.4);
        assert_eq!(out.state.obj_pos[0], b.interior_x - r);
    }

    #[test]
    fn energy_non_increasing_on_level_floor() {
        let (train, _) = make_object_set();
        let b = BoxSpec::default();
        let p = PhysicsConfig::default();
        let mut rng = Rng::new(12);
        for obj in &train {
            for _ in 0..5 {
                let mut s = crate::sim::random_placement(&b, obj, &mut rng);
                s.obj_vel = [rng.range(-400.0, 400.0), rng.range(-400.0, 400.0)];
                if obj.shape.is_oriented() {
                    s.obj_omega = rng.range(-200.0, 200.0);
                }
                let mut e = s.kinetic_energy(obj);
                for k in 0..200 {
                    s = step_dynamics(&s, &level(k as f64 * DT), &b, obj, &p, DT).unwrap().state;
                    let e2 = s.kinetic_energy(obj);
                    assert!(e2 <= e * (1.0 + 1e-12) + 1e-12, "{}: {e} -> {e2}", obj.id);
                    e = e2;
                }
            }
        }
    }

    #[test]
    fn prism_rotates_only_through_contacts() {
        let prism = make_object_set().0[0].clone();
        let b = BoxSpec::default();
        let p = PhysicsConfig::default();
        let mut s = SimState::at_rest([50.0, 60.0], Some(30.0));
        s.obj_vel = [100.0, 0.0];
        let out = step_dynamics(&s, &level(0.0), &b, &prism, &p, DT).unwrap();
        assert_eq!(out.state.obj_theta, Some(30.0));
        // Corner hit on the +x wall spins it.
        let (ex, _) = prism.footprint.extents(30f64.to_radians());
        let mut s = SimState::at_rest([b.interior_x - ex - 0.5, 60.0], Some(30.0));
        s.obj_vel = [400.0, 0.0];
        let out = step_dynamics(&s, &level(0.0), &b, &prism, &p, DT).unwrap();
        assert_eq!(out.contacts.len(), 1);
        assert!(out.state.obj_omega.abs() > 0.0);
    }

    #[test]
    fn stays_inside_under_violent_shaking() {
        let (train, _) = make_object_set();
        let b = BoxSpec::default();
        let p = PhysicsConfig::default();
        let traj = crate::sim::plan_trajectory(8, 20.0, &p.workspace);
        for obj in &train {
            let mut s = crate::sim::random_placement(&b, obj, &mut Rng::new(1));
            for cmd in &traj.samples {
                let mut wild = *cmd;
                wild.acc[0] *= 30.0;
                wild.acc[1] *= 30.0;
                s = step_dynamics(&s, &wild, &b, obj, &p, DT).unwrap().state;
                let (ex, ey) = obj.footprint.extents(s.obj_theta.unwrap_or(0.0).to_radians());
                assert!(s.obj_pos[0] >= ex - 0.1 && s.obj_pos[0] <= b.interior_x - ex + 0.1);
                assert!(s.obj_pos[1] >= ey - 0.1 && s.obj_pos[1] <= b.interior_y - ey + 0.1);
                if let Some(t) = s.obj_theta {
                    assert!((0.0..180.0).contains(&t));
                }
            }
        }
    }

    #[test]
    fn world_to_box_gravity_components() {
        let g = world_to_box(&[0.0, 0.0, 0.0, 25.0, 10.0, 0.0], [0.0, 0.0, -1.0]);
        assert!((g[0] - 10f64.to_radians().sin()).abs() < 1e-12);
        let g = world_to_box(&[0.0, 0.0, 0.0, 0.0, 0.0, 10.0], [0.0, 0.0, -1.0]);
        assert!((g[1] + 10f64.to_radians().sin()).abs() < 1e-12);
    }
}
