use nalgebra::Matrix3;

use super::RigidTransform;

/// Below this distance from ±1 the pitch term is treated as gimbal lock.
const GIMBAL_EPS: f64 = 1e-12;

/// Wraps an angle in degrees to `(-180, 180]`.
pub fn wrap_deg(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Intrinsic X-Y-Z Euler angles `(a, b, c)` in degrees with
/// `R = Rx(a)·Ry(b)·Rz(c)`, `b ∈ [-90, 90]`. At gimbal lock the first
/// angle is forced to 0.
pub fn euler_xyz_deg(r: &Matrix3<f64>) -> [f64; 3] {
    let sb = r[(0, 2)].clamp(-1.0, 1.0);
    if 1.0 - sb.abs() < GIMBAL_EPS {
        let b = if sb > 0.0 { 90.0 } else { -90.0 };
        let c = r[(1, 0)].atan2(r[(1, 1)]).to_degrees();
        return [0.0, b, c];
    }
    let a = (-r[(1, 2)]).atan2(r[(2, 2)]).to_degrees();
    let b = sb.asin().to_degrees();
    let c = (-r[(0, 1)]).atan2(r[(0, 0)]).to_degrees();
    [a, b, c]
}

/// Rotation error in degrees: root mean square of the three wrapped Euler
/// angles of the residual rotation `R_gtᵀ·R_pred`.
pub fn rotation_rmse(pred: &RigidTransform, gt: &RigidTransform) -> f64 {
    let rel = gt.rotation().transpose() * pred.rotation();
    let e = euler_xyz_deg(&rel);
    let ss: f64 = e.iter().map(|a| wrap_deg(*a).powi(2)).sum();
    (ss / 3.0).sqrt()
}

/// Translation error: root mean square of the component residuals.
pub fn translation_rmse(pred: &RigidTransform, gt: &RigidTransform) -> f64 {
    let d = pred.translation() - gt.translation();
    (d.norm_squared() / 3.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn equal_transforms_have_zero_error() {
        let t = RigidTransform::from_euler_xyz_deg(10.0, -20.0, 33.0)
            .with_translation(Vector3::new(1.0, 2.0, 3.0));
        assert!(rotation_rmse(&t, &t) < 1e-9);
        assert_eq!(translation_rmse(&t, &t), 0.0);
    }

    #[test]
    fn ten_degrees_about_z() {
        let e = rotation_rmse(&RigidTransform::rot_z_deg(10.0), &RigidTransform::identity());
        assert!((e - 10.0 / 3f64.sqrt()).abs() < 1e-9, "{e}");
        assert!((e - 5.7735).abs() < 1e-4);
    }

    #[test]
    fn wrap_around() {
        let e = rotation_rmse(&RigidTransform::rot_z_deg(-170.0), &RigidTransform::rot_z_deg(175.0));
        assert!((e - 15.0 / 3f64.sqrt()).abs() < 1e-9, "{e}");
    }

    #[test]
    fn translation_examples() {
        let id = RigidTransform::identity();
        let dx = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert!((translation_rmse(&dx, &id) - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        let d111 = RigidTransform::from_translation(Vector3::new(1.0, 1.0, 1.0));
        assert!((translation_rmse(&d111, &id) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euler_round_trip_and_gimbal() {
        let [a, b, c] = euler_xyz_deg(RigidTransform::from_euler_xyz_deg(12.0, -34.0, 56.0).rotation());
        assert!((a - 12.0).abs() < 1e-9 && (b + 34.0).abs() < 1e-9 && (c - 56.0).abs() < 1e-9);
        let locked = RigidTransform::from_euler_xyz_deg(0.0, 90.0, 25.0);
        let [a, b, c] = euler_xyz_deg(locked.rotation());
        assert_eq!(a, 0.0);
        assert!((b - 90.0).abs() < 1e-9);
        assert!((c - 25.0).abs() < 1e-6);
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_deg(180.0), 180.0);
        assert_eq!(wrap_deg(-180.0), 180.0);
        assert_eq!(wrap_deg(-345.0), 15.0);
        assert_eq!(wrap_deg(190.0), -170.0);
    }
}
