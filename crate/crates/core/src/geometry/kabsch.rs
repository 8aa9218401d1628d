use nalgebra::{Matrix3, Vector3};

use super::{Point3, RigidTransform};
use crate::error::{invalid, Error, Result};

/// Relative singular-value floor below which the cross-covariance is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]`.
///
/// Reflections are corrected by flipping the sign of the singular direction
/// with the smallest singular value, so the result is always a proper
/// rotation. Needs at least three non-collinear source points.
pub fn kabsch(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(invalid(format!(
            "kabsch: {} source vs {} target points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(invalid(format!("kabsch needs at least 3 pairs, got {}", src.len())));
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p) / n;

    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }

    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateGeometry("SVD did not converge".into())),
    };
    let s = svd.singular_values;
    let smax = s.max();
    let mut sorted = [s[0], s[1], s[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if !(smax > 0.0) || sorted[1] <= RANK_TOL * smax {
        return Err(Error::DegenerateGeometry(
            "cross-covariance is rank deficient".into(),
        ));
    }

    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(s.imin(), s.imin())] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let translation = cd - rotation * cs;
    Ok(RigidTransform::from_parts_unchecked(rotation, translation))
}
