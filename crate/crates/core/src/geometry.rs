//! Rigid transforms and small vector helpers.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Rigid transform `x ↦ R·x + t` mapping a local frame into its parent.
///
/// Serialized as `{"rotation": [[r00, r01, r02], ...], "translation": [x, y, z]}`
/// with rows of the rotation matrix listed in order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<PoseRepr> for Pose {
    type Error = String;

    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        Pose::new(m, Vector3::from(r.translation))
            .ok_or_else(|| "rotation is not orthonormal with determinant +1".to_string())
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = p.rotation[(i, j)];
            }
        }
        PoseRepr {
            rotation,
            translation: p.translation.into(),
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    /// Returns `None` unless `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Option<Self> {
        is_rotation(&rotation).then_some(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self {
            rotation: *rot.matrix(),
            translation,
        }
    }

    /// Camera-style pose at `eye` whose local +z looks at `target` and whose
    /// local +y points away from `up` (image rows grow downwards).
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Option<Self> {
        let z = (target - eye).try_normalize(1e-12)?;
        let x = z.cross(&up).try_normalize(1e-12)?;
        let y = z.cross(&x);
        let rotation = Matrix3::from_columns(&[x, y, z]);
        Self::new(rotation, eye)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    pub fn inverse_transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// The same pose shifted by `delta` in the parent frame.
    pub fn translated(&self, delta: Vector3<f64>) -> Self {
        Self {
            rotation: self.rotation,
            translation: self.translation + delta,
        }
    }
}

pub fn is_rotation(m: &Matrix3<f64>) -> bool {
    let should_be_identity = m.transpose() * m;
    (should_be_identity - Matrix3::identity()).amax() <= ROTATION_TOLERANCE
        && (m.determinant() - 1.0).abs() <= ROTATION_TOLERANCE
}

/// A ray with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self { origin, direction }
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

/// Wraps an angle into `[0, π)`.
pub fn wrap_half_turn(angle: f64) -> f64 {
    let a = angle.rem_euclid(std::f64::consts::PI);
    // rem_euclid can round up to exactly π for tiny negative inputs.
    if a >= std::f64::consts::PI {
        0.0
    } else {
        a
    }
}

/// Smallest absolute difference between two undirected angles (mod π).
pub fn half_turn_distance(a: f64, b: f64) -> f64 {
    let d = wrap_half_turn(a - b);
    d.min(std::f64::consts::PI - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn look_at_builds_valid_rotation() {
        let p = Pose::look_at(
            Vector3::new(0.0, -0.3, 0.6),
            Vector3::zeros(),
            Vector3::z(),
        )
        .unwrap();
        assert!(is_rotation(p.rotation()));
        let forward = p.transform_vector(&Vector3::z());
        assert!((forward - Vector3::new(0.0, 0.3, -0.6).normalize()).norm() < 1e-12);
    }

    #[test]
    fn rejects_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(m, Vector3::zeros()).is_none());
    }

    #[test]
    fn json_round_trip_rejects_bad_rotation() {
        let bad = r#"{"rotation":[[2,0,0],[0,1,0],[0,0,1]],"translation":[0,0,0]}"#;
        assert!(serde_json::from_str::<Pose>(bad).is_err());
        let p = Pose::from_axis_angle(Vector3::new(1.0, 2.0, 3.0), 0.7, Vector3::new(1.0, 0.0, 2.0));
        let s = serde_json::to_string(&p).unwrap();
        let q: Pose = serde_json::from_str(&s).unwrap();
        assert!((p.rotation() - q.rotation()).amax() < 1e-15);
    }

    #[test]
    fn wrap_is_in_range() {
        for a in [-7.0, -1e-18, 0.0, 3.2, 100.0] {
            let w = wrap_half_turn(a);
            assert!((0.0..std::f64::consts::PI).contains(&w));
        }
    }

    proptest! {
        #[test]
        fn rigid_transforms_preserve_distance(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in 0.1f64..1.0, angle in -3.0f64..3.0,
            t in prop::array::uniform3(-2.0f64..2.0),
            a in prop::array::uniform3(-1.0f64..1.0), b in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let p = Pose::from_axis_angle(Vector3::new(ax, ay, az), angle, Vector3::from(t));
            let a = Vector3::from(a);
            let b = Vector3::from(b);
            let d0 = (a - b).norm();
            let d1 = (p.transform_point(&a) - p.transform_point(&b)).norm();
            prop_assert!((d0 - d1).abs() < 1e-9);
            let back = p.inverse_transform_point(&p.transform_point(&a));
            prop_assert!((back - a).norm() < 1e-12);
        }
    }
}
