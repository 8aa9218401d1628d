//! Partial views, augmentation and pair construction.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Point3, PointCloud, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    /// Upper bound of each Euler angle, degrees.
    pub rot_max_deg: f64,
    /// Translation components are drawn from `[-trans_range, trans_range]`.
    pub trans_range: f64,
    pub noise_sigma: f64,
    pub keep_fraction: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            rot_max_deg: 60.0,
            trans_range: 0.5,
            noise_sigma: 0.0,
            keep_fraction: 0.6,
        }
    }
}

impl AugmentSpec {
    /// No rotation, translation or noise; full clouds.
    pub fn zero() -> Self {
        Self {
            rot_max_deg: 0.0,
            trans_range: 0.0,
            noise_sigma: 0.0,
            keep_fraction: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(invalid(format!("keep_fraction must lie in (0, 1], got {}", self.keep_fraction)));
        }
        for (name, v) in [
            ("rot_max_deg", self.rot_max_deg),
            ("trans_range", self.trans_range),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Uniformly distributed unit vector.
pub fn random_direction(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Keeps the `⌈keep_fraction·N⌉` points furthest along `direction`, in their
/// original order. Points without ids get their original indices as ids.
pub fn partial_view(cloud: &PointCloud, direction: &Vector3<f64>, keep_fraction: f64) -> Result<PointCloud> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(invalid(format!("keep_fraction must lie in (0, 1], got {keep_fraction}")));
    }
    let n = cloud.len();
    let keep = ((keep_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let depth: Vec<f64> = cloud.points().iter().map(|p| p.dot(direction)).collect();
    // stable sort: equal depths keep index order
    order.sort_by(|&a, &b| depth[b].total_cmp(&depth[a]));
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    let labelled;
    let src = if cloud.ids().is_some() {
        cloud
    } else {
        labelled = cloud.clone().relabel((0..n as u32).collect())?;
        &labelled
    };
    src.select(&kept)
}

/// Random rigid motion within the bounds of `spec`, plus optional Gaussian noise.
/// The returned transform excludes the noise.
pub fn augment(cloud: &PointCloud, spec: &AugmentSpec, rng: &mut impl Rng) -> Result<(PointCloud, RigidTransform)> {
    spec.validate()?;
    let mut angle = || rng.random::<f64>() * spec.rot_max_deg;
    let (a, b, c) = (angle(), angle(), angle());
    let mut shift = || (2.0 * rng.random::<f64>() - 1.0) * spec.trans_range;
    let t = Vector3::new(shift(), shift(), shift());
    let transform = RigidTransform::from_euler_xyz_deg(a, b, c).with_translation(t);
    let moved = transform.apply(cloud);
    if spec.noise_sigma == 0.0 {
        return Ok((moved, transform));
    }
    let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| invalid(e.to_string()))?;
    let noisy: Vec<Point3> = moved
        .points()
        .iter()
        .map(|p| p + Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng)))
        .collect();
    let out = match moved.ids() {
        Some(ids) => PointCloud::with_ids(noisy, ids.to_vec())?,
        None => PointCloud::new(noisy)?,
    };
    Ok((out, transform))
}

/// Source and target with known ground truth; `y_i ≈ t_gt(x_i)` holds for
/// every index in training pairs and for every shared id in eval pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationPair {
    pub x: PointCloud,
    pub y: PointCloud,
    pub t_gt: RigidTransform,
}

impl RegistrationPair {
    /// `(i, j)` index pairs of points sharing an id.
    pub fn shared(&self) -> Vec<(usize, usize)> {
        shared_ids(&self.x, &self.y)
    }
}

pub fn shared_ids(x: &PointCloud, y: &PointCloud) -> Vec<(usize, usize)> {
    let xi = x.ids_or_indices();
    let lookup: std::collections::HashMap<u32, usize> =
        y.ids_or_indices().into_iter().enumerate().map(|(j, id)| (id, j)).collect();
    xi.iter()
        .enumerate()
        .filter_map(|(i, id)| lookup.get(id).map(|&j| (i, j)))
        .collect()
}

/// One partial view `x` and its augmented copy `y`, index aligned.
pub fn make_training_pair(base: &PointCloud, spec: &AugmentSpec, partial: bool, rng: &mut impl Rng) -> Result<RegistrationPair> {
    spec.validate()?;
    let x = if partial {
        partial_view(base, &random_direction(rng), spec.keep_fraction)?
    } else {
        base.clone()
    };
    let (y, t_gt) = augment(&x, spec, rng)?;
    Ok(RegistrationPair { x, y, t_gt })
}

pub const EVAL_PAIR_RETRIES: usize = 32;

/// Two independent views, each augmented; `t_gt` maps the first onto the
/// second.
pub fn make_eval_pair(base: &PointCloud, spec: &AugmentSpec, rng: &mut impl Rng) -> Result<RegistrationPair> {
    spec.validate()?;
    for _ in 0..EVAL_PAIR_RETRIES {
        let va = partial_view(base, &random_direction(rng), spec.keep_fraction)?;
        let vb = partial_view(base, &random_direction(rng), spec.keep_fraction)?;
        if shared_ids(&va, &vb).len() < 3 {
            continue;
        }
        let (x, ta) = augment(&va, spec, rng)?;
        let (y, tb) = augment(&vb, spec, rng)?;
        return Ok(RegistrationPair {
            x,
            y,
            t_gt: tb.compose(&ta.inverse()),
        });
    }
    Err(Error::DegenerateSampling(format!(
        "no view pair with 3 shared points after {EVAL_PAIR_RETRIES} attempts"
    )))
}
