use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Vec3;

/// Rigid transform in SE(3): a unit quaternion followed by a translation in meters.
///
/// Applying the pose to a point computes `rotation * p + translation`. On the wire a
/// pose is `{"rotation": [w, x, y, z], "translation": [x, y, z]}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoseRepr", try_from = "PoseRepr")]
pub struct Pose6D {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl From<Pose6D> for PoseRepr {
    fn from(p: Pose6D) -> Self {
        let q = p.rotation.quaternion();
        PoseRepr {
            rotation: [q.w, q.i, q.j, q.k],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl TryFrom<PoseRepr> for Pose6D {
    type Error = String;

    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        let [w, x, y, z] = r.rotation;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(format!("quaternion {:?} cannot be normalized", r.rotation));
        }
        if r.translation.iter().any(|v| !v.is_finite()) {
            return Err("non-finite translation".into());
        }
        // Already-unit input is kept bit-exact so that files round-trip losslessly.
        let rotation = if (n - 1.0).abs() < 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(Pose6D {
            rotation,
            translation: Vector3::from(r.translation),
        })
    }
}

impl Default for Pose6D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose6D {
    pub fn identity() -> Self {
        Pose6D {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Pose6D {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Pose6D::new(UnitQuaternion::identity(), translation)
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Pose6D::new(rotation, Vec3::zeros())
    }

    /// Rotation of `angle_rad` about `axis` (any non-zero vector), then `translation`.
    pub fn from_axis_angle(axis: Vec3, angle_rad: f64, translation: Vec3) -> Self {
        Pose6D::new(
            UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle_rad),
            translation,
        )
    }

    pub fn from_matrix(rotation: &Matrix3<f64>, translation: Vec3) -> Self {
        let r = Rotation3::from_matrix_unchecked(*rotation);
        Pose6D::new(UnitQuaternion::from_rotation_matrix(&r), translation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose6D) -> Pose6D {
        compose(self, other)
    }

    pub fn inverse(&self) -> Pose6D {
        let inv = self.rotation.inverse();
        Pose6D::new(inv, -(inv * self.translation))
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse() * (p - self.translation)
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

/// Compose two poses; the result applies `b` then `a`. The quaternion is renormalized
/// so drift does not accumulate over long chains.
pub fn compose(a: &Pose6D, b: &Pose6D) -> Pose6D {
    let q = a.rotation.quaternion() * b.rotation.quaternion();
    Pose6D {
        rotation: UnitQuaternion::from_quaternion(q),
        translation: a.rotation * b.translation + a.translation,
    }
}

/// Geodesic rotation distance in degrees, `2·acos(|⟨qa, qb⟩|)`, in `[0, 180]`.
///
/// Evaluated through `atan2` of the relative rotation, which stays accurate for
/// nearly identical rotations where `acos` loses half the mantissa.
pub fn rotation_error_deg(a: &Pose6D, b: &Pose6D) -> f64 {
    let rel = a.rotation.quaternion().conjugate() * b.rotation.quaternion();
    let angle = 2.0 * rel.imag().norm().atan2(rel.w.abs());
    angle.to_degrees().clamp(0.0, 180.0)
}

pub fn translation_error_m(a: &Pose6D, b: &Pose6D) -> f64 {
    (a.translation - b.translation).norm()
}

/// Uniform rotation on SO(3) via the subgroup algorithm (Shoemake).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = Quaternion::new(
        b * (tau * u3).cos(),
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
    );
    UnitQuaternion::from_quaternion(q)
}
