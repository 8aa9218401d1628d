use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::{Point3, PointCloud};
use crate::error::{invalid, Result};

const ORTHO_TOL: f64 = 1e-9;

/// Proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = t.rotation;
        Self {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = crate::Error;

    fn try_from(r: TransformRepr) -> Result<Self> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        Self::new(m, Vector3::from(r.translation))
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Checks orthonormality and `det = +1` to within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(invalid("transform has non-finite entries"));
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.abs().max() > ORTHO_TOL {
            return Err(invalid("rotation is not orthonormal"));
        }
        if (rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(invalid("rotation determinant is not +1"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), t)
    }

    /// Rotation about a unit axis by `angle_deg`, no translation.
    pub fn from_axis_angle_deg(axis: &Vector3<f64>, angle_deg: f64) -> Self {
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle_deg.to_radians());
        Self::from_parts_unchecked(*r.matrix(), Vector3::zeros())
    }

    pub fn rot_x_deg(a: f64) -> Self {
        Self::from_axis_angle_deg(&Vector3::x(), a)
    }

    pub fn rot_y_deg(a: f64) -> Self {
        Self::from_axis_angle_deg(&Vector3::y(), a)
    }

    pub fn rot_z_deg(a: f64) -> Self {
        Self::from_axis_angle_deg(&Vector3::z(), a)
    }

    /// Intrinsic X-Y-Z Euler angles in degrees: `R = Rx(a)·Ry(b)·Rz(c)`.
    pub fn from_euler_xyz_deg(a: f64, b: f64, c: f64) -> Self {
        let r = Self::rot_x_deg(a).rotation * Self::rot_y_deg(b).rotation * Self::rot_z_deg(c).rotation;
        Self::from_parts_unchecked(r, Vector3::zeros())
    }

    pub fn with_translation(mut self, t: Vector3<f64>) -> Self {
        self.translation = t;
        self
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn apply_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// Maps every point; ids are preserved.
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        cloud.map_points(|p| self.apply_point(p))
    }

    /// `self ∘ other`, i.e. `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        Self::from_parts_unchecked(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        Self::from_parts_unchecked(rt, -(rt * self.translation))
    }

    /// Rotation angle of the relative rotation, in degrees.
    pub fn angle_to_deg(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RigidTransform {
        RigidTransform::rot_z_deg(30.0).with_translation(Vector3::new(0.5, -1.0, 2.0))
    }

    #[test]
    fn identity_leaves_cloud_unchanged() {
        let c = PointCloud::from_xyz(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]]).unwrap();
        assert_eq!(RigidTransform::identity().apply(&c), c);
    }

    #[test]
    fn pure_translation() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
        let t = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(t.apply(&c).point(0), &Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn inverse_round_trip() {
        let t = sample();
        let c = PointCloud::from_xyz(&[[1.0, 2.0, 3.0], [-4.0, 0.5, 0.25]]).unwrap();
        let back = t.inverse().apply(&t.apply(&c));
        for (a, b) in back.points().iter().zip(c.points()) {
            assert!((a - b).norm() < 1e-12);
        }
        let id = t.inverse().compose(&t);
        assert!((id.rotation() - Matrix3::identity()).abs().max() < 1e-12);
        assert!(id.translation().norm() < 1e-12);
    }

    #[test]
    fn compose_with_identity_and_inverse_of_identity() {
        let t = sample();
        assert_eq!(RigidTransform::identity().compose(&t), t);
        assert_eq!(RigidTransform::identity().inverse(), RigidTransform::identity());
    }

    #[test]
    fn compose_order() {
        let a = RigidTransform::rot_x_deg(20.0).with_translation(Vector3::new(1.0, 0.0, 0.0));
        let b = sample();
        let p = Point3::new(0.3, -0.2, 0.9);
        let lhs = a.compose(&b).apply_point(&p);
        let rhs = a.apply_point(&b.apply_point(&p));
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn validation_rejects_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
        assert!(RigidTransform::new(Matrix3::identity() * 2.0, Vector3::zeros()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = sample();
        let s = serde_json::to_string(&t).unwrap();
        let back: RigidTransform = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
