use crate::error::{invalid, Result};
use crate::geometry::{kabsch, KdTree, PointCloud, RigidTransform};

/// Point-to-point ICP from the identity. Stops when successive estimates
/// differ by less than `tol` (rotation angle in radians plus translation
/// distance) or after `max_iters` rounds.
pub fn icp(x: &PointCloud, y: &PointCloud, max_iters: usize, tol: f64) -> Result<RigidTransform> {
    if max_iters == 0 {
        return Err(invalid("icp needs at least one iteration"));
    }
    let tree = KdTree::build(y.points());
    let mut current = RigidTransform::identity();
    let mut matched = Vec::with_capacity(x.len());
    for _ in 0..max_iters {
        matched.clear();
        for p in x.points() {
            let (j, _) = tree.nearest(&current.apply_point(p));
            matched.push(*y.point(j));
        }
        let next = kabsch(x.points(), &matched)?;
        let delta = next.angle_to_deg(&current).to_radians() + (next.translation() - current.translation()).norm();
        current = next;
        if delta < tol {
            break;
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use nalgebra::Vector3;

    fn grid() -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                let (x, y) = (i as f64 * 0.1, j as f64 * 0.1);
                pts.push(Point3::new(x, y, 0.3 * (x * 3.0).sin() + 0.2 * y * y));
            }
        }
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn identical_clouds_give_identity() {
        let c = grid();
        let t = icp(&c, &c, 1, 1e-9).unwrap();
        assert!((t.rotation() - nalgebra::Matrix3::identity()).norm() < 1e-12);
        assert!(t.translation().norm() < 1e-12);
    }

    #[test]
    fn small_translation_recovered() {
        let c = grid();
        let shift = Vector3::new(0.01, 0.0, 0.0);
        let y = RigidTransform::from_translation(shift).apply(&c);
        let t = icp(&c, &y, 50, 1e-12).unwrap();
        assert!((t.translation() - shift).norm() < 1e-6);
    }
}
