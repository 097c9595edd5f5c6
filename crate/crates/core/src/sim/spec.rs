use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box geometry in mm and mass in kg. The extents are interior dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub interior_x: f64,
    pub interior_y: f64,
    pub interior_z: f64,
    pub wall_thickness: f64,
    pub box_mass: f64,
}

impl Default for BoxSpec {
    fn default() -> Self {
        Self {
            interior_x: 100.0,
            interior_y: 120.0,
            interior_z: 70.0,
            wall_thickness: 6.3,
            box_mass: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeClass {
    RectPrism,
    Cylinder,
    SphereLarge,
    SphereMedium,
    SphereSmall,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 5] = [
        ShapeClass::RectPrism,
        ShapeClass::Cylinder,
        ShapeClass::SphereLarge,
        ShapeClass::SphereMedium,
        ShapeClass::SphereSmall,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_sphere(self) -> bool {
        matches!(
            self,
            ShapeClass::SphereLarge | ShapeClass::SphereMedium | ShapeClass::SphereSmall
        )
    }

    pub fn is_oriented(self) -> bool {
        !self.is_sphere()
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::RectPrism => "rect_prism",
            ShapeClass::Cylinder => "cylinder",
            ShapeClass::SphereLarge => "sphere_large",
            ShapeClass::SphereMedium => "sphere_medium",
            ShapeClass::SphereSmall => "sphere_small",
        }
    }
}

/// Footprint dimensions in mm. Cylinders lie on their side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Footprint {
    Prism { width: f64, length: f64, height: f64 },
    Cylinder { radius: f64, length: f64 },
    Sphere { radius: f64 },
}

impl Footprint {
    /// Half extents along the box x and y axes when the long axis makes
    /// angle `theta` (radians) with the x axis.
    pub fn extents(&self, theta: f64) -> (f64, f64) {
        let (s, c) = theta.sin_cos();
        let (s, c) = (s.abs(), c.abs());
        match *self {
            Footprint::Prism { width, length, .. } => {
                let (a, b) = (length / 2.0, width / 2.0);
                (a * c + b * s, a * s + b * c)
            }
            Footprint::Cylinder { radius, length } => {
                let a = length / 2.0 - radius;
                (a * c + radius, a * s + radius)
            }
            Footprint::Sphere { radius } => (radius, radius),
        }
    }

    /// Radius of the smallest circle around the centre containing the
    /// footprint.
    pub fn circumradius(&self) -> f64 {
        match *self {
            Footprint::Prism { width, length, .. } => 0.5 * width.hypot(length),
            Footprint::Cylinder { length, .. } => length / 2.0,
            Footprint::Sphere { radius } => radius,
        }
    }

    /// Height of the centre of mass above the floor.
    pub fn center_height(&self) -> f64 {
        match *self {
            Footprint::Prism { height, .. } => height / 2.0,
            Footprint::Cylinder { radius, .. } | Footprint::Sphere { radius } => radius,
        }
    }

    /// Moment of inertia about the vertical axis per unit mass (mm²).
    pub fn inertia_per_mass(&self) -> f64 {
        match *self {
            Footprint::Prism { width, length, .. } => (width * width + length * length) / 12.0,
            Footprint::Cylinder { radius, length } => (3.0 * radius * radius + length * length) / 12.0,
            Footprint::Sphere { radius } => 0.4 * radius * radius,
        }
    }

    /// Whether the local-frame point `(u, v)` (u along the long axis) lies in
    /// the footprint.
    pub fn contains_local(&self, u: f64, v: f64) -> bool {
        match *self {
            Footprint::Prism { width, length, .. } => u.abs() <= length / 2.0 && v.abs() <= width / 2.0,
            Footprint::Cylinder { radius, length } => {
                let a = length / 2.0 - radius;
                let du = u.abs() - a.min(u.abs());
                du * du + v * v <= radius * radius
            }
            Footprint::Sphere { radius } => u * u + v * v <= radius * radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub shape: ShapeClass,
    pub footprint: Footprint,
    pub mass: f64,
    /// Friction along the long axis (sliding for a cylinder).
    pub friction_long: f64,
    /// Friction across the long axis (rolling for a cylinder).
    pub friction_lat: f64,
    pub restitution: f64,
}

pub const MIN_CLEARANCE_MM: f64 = 5.0;

impl ObjectSpec {
    pub fn validate(&self, box_spec: &BoxSpec) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(format!("{}: {msg}", self.id)));
        let matches_shape = match self.footprint {
            Footprint::Prism { .. } => self.shape == ShapeClass::RectPrism,
            Footprint::Cylinder { radius, length } => self.shape == ShapeClass::Cylinder && length > 2.0 * radius,
            Footprint::Sphere { .. } => self.shape.is_sphere(),
        };
        if !matches_shape {
            return bad(format!("footprint {:?} does not fit shape {:?}", self.footprint, self.shape));
        }
        if self.mass <= 0.0 {
            return bad("mass must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return bad("restitution outside [0, 1]".into());
        }
        if self.shape.is_sphere() && self.friction_long != self.friction_lat {
            return bad("sphere friction must be isotropic".into());
        }
        if self.shape == ShapeClass::Cylinder && self.friction_lat >= self.friction_long {
            return bad("cylinder rolling friction must be below sliding friction".into());
        }
        let span = 2.0 * (self.footprint.circumradius() + MIN_CLEARANCE_MM);
        if span > box_spec.interior_x.min(box_spec.interior_y) {
            return bad(format!("needs {span} mm of floor in every orientation"));
        }
        Ok(())
    }

    pub fn is_isotropic(&self) -> bool {
        self.friction_long == self.friction_lat
    }
}

const RESTITUTION: f64 = 0.4;
const MU_PRISM: f64 = 0.45;
const MU_CYLINDER_LAT: f64 = 0.05;
const MU_CYLINDER_LONG: f64 = 0.40;
const MU_SPHERE: f64 = 0.03;

fn prism(id: &str, width: f64, length: f64, height: f64, mass: f64) -> ObjectSpec {
    ObjectSpec {
        id: id.into(),
        shape: ShapeClass::RectPrism,
        footprint: Footprint::Prism { width, length, height },
        mass,
        friction_long: MU_PRISM,
        friction_lat: MU_PRISM,
        restitution: RESTITUTION,
    }
}

fn cylinder(id: &str, radius: f64, length: f64, mass: f64) -> ObjectSpec {
    ObjectSpec {
        id: id.into(),
        shape: ShapeClass::Cylinder,
        footprint: Footprint::Cylinder { radius, length },
        mass,
        friction_long: MU_CYLINDER_LONG,
        friction_lat: MU_CYLINDER_LAT,
        restitution: RESTITUTION,
    }
}

fn sphere(id: &str, shape: ShapeClass, radius: f64, mass: f64) -> ObjectSpec {
    ObjectSpec {
        id: id.into(),
        shape,
        footprint: Footprint::Sphere { radius },
        mass,
        friction_long: MU_SPHERE,
        friction_lat: MU_SPHERE,
        restitution: RESTITUTION,
    }
}

/// The fixed catalog: nine training objects and eight held-out objects
/// covering the same five shape classes.
pub fn make_object_set() -> (Vec<ObjectSpec>, Vec<ObjectSpec>) {
    use ShapeClass::*;
    let training = vec![
        prism("prism-light", 25.0, 60.0, 20.0, 0.120),
        prism("prism-heavy", 25.0, 60.0, 20.0, 0.240),
        cylinder("cylinder-wood", 12.5, 60.0, 0.080),
        cylinder("cylinder-steel", 12.5, 60.0, 0.300),
        sphere("sphere-large", SphereLarge, 25.0, 0.150),
        sphere("sphere-medium-light", SphereMedium, 17.5, 0.060),
        sphere("sphere-medium-heavy", SphereMedium, 17.5, 0.180),
        sphere("sphere-small-light", SphereSmall, 10.0, 0.020),
        sphere("sphere-small-heavy", SphereSmall, 10.0, 0.050),
    ];
    let evaluation = vec![
        prism("eval-prism-small", 20.0, 50.0, 20.0, 0.100),
        prism("eval-prism-large", 30.0, 70.0, 25.0, 0.300),
        cylinder("eval-cylinder-thin", 10.0, 50.0, 0.060),
        cylinder("eval-cylinder-thick", 15.0, 70.0, 0.250),
        sphere("eval-sphere-large-a", SphereLarge, 22.5, 0.120),
        sphere("eval-sphere-large-b", SphereLarge, 27.5, 0.200),
        sphere("eval-sphere-medium", SphereMedium, 15.0, 0.100),
        sphere("eval-sphere-small", SphereSmall, 12.5, 0.040),
    ];
    (training, evaluation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_valid() {
        let (train, eval) = make_object_set();
        assert_eq!(train.len(), 9);
        assert_eq!(eval.len(), 8);
        let b = BoxSpec::default();
        for o in train.iter().chain(&eval) {
            o.validate(&b).unwrap();
        }
    }

    #[test]
    fn every_class_in_training_set() {
        let (train, eval) = make_object_set();
        for class in ShapeClass::ALL {
            assert!(train.iter().any(|o| o.shape == class), "{class:?}");
            assert!(eval.iter().any(|o| o.shape == class), "{class:?}");
        }
    }

    #[test]
    fn evaluation_dims_are_new() {
        let (train, eval) = make_object_set();
        for e in &eval {
            assert!(train.iter().all(|t| t.footprint != e.footprint), "{}", e.id);
        }
    }

    #[test]
    fn clearance_rule() {
        let b = BoxSpec::default();
        let mut huge = make_object_set().0[4].clone();
        huge.footprint = Footprint::Sphere { radius: 46.0 };
        assert!(huge.validate(&b).is_err());
        let mut sticky = make_object_set().0[2].clone();
        sticky.friction_lat = 0.5;
        assert!(sticky.validate(&b).is_err());
    }

    #[test]
    fn extents_rotate() {
        let f = Footprint::Prism { width: 20.0, length: 60.0, height: 10.0 };
        let (ex, ey) = f.extents(0.0);
        assert!((ex - 30.0).abs() < 1e-12 && (ey - 10.0).abs() < 1e-12);
        let (ex, ey) = f.extents(std::f64::consts::FRAC_PI_2);
        assert!((ex - 10.0).abs() < 1e-9 && (ey - 30.0).abs() < 1e-9);
    }
}
