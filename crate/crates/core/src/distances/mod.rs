//! Shape-level distances: the outlier-filtered Chamfer distance and the
//! confidence guided distance (CGD), which weights every nearest-neighbour
//! term by `exp(-γ·P)` for the latent similarity `P` of the matched pair.
//!
//! The outlier filter keeps a point when the *Euclidean* distance to its
//! nearest neighbour in the other cloud is below `cutoff_multiplier · d_s`;
//! the summed terms are squared distances. `d_s` is the largest
//! nearest-neighbour spacing found in either cloud.

use serde::{Deserialize, Serialize};

use crate::consensus::CorrespondenceMatrix;
use crate::error::{invalid, Result};
use crate::geometry::{dist2, KdTree, Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Maximal sampling distance, model units.
    pub d_s: f64,
    pub cutoff_multiplier: f64,
}

impl FilterParams {
    pub const DEFAULT_CUTOFF_MULTIPLIER: f64 = 2.0;

    pub fn new(d_s: f64, cutoff_multiplier: f64) -> Result<Self> {
        if !(d_s > 0.0 && d_s.is_finite()) {
            return Err(invalid(format!("d_s must be positive and finite, got {d_s}")));
        }
        if !(cutoff_multiplier > 0.0 && cutoff_multiplier.is_finite()) {
            return Err(invalid(format!(
                "cutoff multiplier must be positive, got {cutoff_multiplier}"
            )));
        }
        Ok(Self {
            d_s,
            cutoff_multiplier,
        })
    }

    pub fn with_sampling_distance(d_s: f64) -> Result<Self> {
        Self::new(d_s, Self::DEFAULT_CUTOFF_MULTIPLIER)
    }

    #[inline]
    pub fn cutoff(&self) -> f64 {
        self.cutoff_multiplier * self.d_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgdParams {
    /// Weight of the latent similarity.
    pub gamma: f64,
}

impl Default for CgdParams {
    fn default() -> Self {
        Self { gamma: 2.0 }
    }
}

/// Exact nearest neighbour of `p` by linear scan: `(index, squared distance)`,
/// ties to the lower index.
pub fn nn_distance(p: &Point3, cloud: &PointCloud) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in cloud.points().iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Largest same-cloud nearest-neighbour distance over both clouds.
pub fn max_sampling_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let mut d_s: f64 = 0.0;
    for (name, cloud) in [("first", a), ("second", b)] {
        if cloud.len() < 2 {
            return Err(invalid(format!(
                "{name} cloud needs at least 2 points for a sampling distance"
            )));
        }
        let tree = KdTree::build(cloud.points());
        for (i, p) in cloud.points().iter().enumerate() {
            let (d2, _) = tree.knn(p, 1, Some(i))[0];
            d_s = d_s.max(d2.sqrt());
        }
    }
    Ok(d_s)
}

/// Filtered Chamfer distance between the transformed source `tx` and `y`.
pub fn chamfer(tx: &PointCloud, y: &PointCloud, f: &FilterParams) -> f64 {
    DistanceScorer::new(y, *f).chamfer(tx)
}

/// Confidence guided distance. `p` rows follow `tx`'s point order and its
/// columns follow `y`'s.
pub fn cgd(
    tx: &PointCloud,
    y: &PointCloud,
    p: &CorrespondenceMatrix,
    g: &CgdParams,
    f: &FilterParams,
) -> Result<f64> {
    DistanceScorer::new(y, *f).cgd(tx, p, g)
}

/// Scores many transformed sources against one fixed target, reusing the
/// target's kd-tree.
#[derive(Debug, Clone)]
pub struct DistanceScorer<'a> {
    y: &'a PointCloud,
    y_tree: KdTree<'a>,
    filter: FilterParams,
}

impl<'a> DistanceScorer<'a> {
    pub fn new(y: &'a PointCloud, filter: FilterParams) -> Self {
        Self {
            y,
            y_tree: KdTree::build(y.points()),
            filter,
        }
    }

    pub fn filter(&self) -> &FilterParams {
        &self.filter
    }

    pub fn chamfer(&self, tx: &PointCloud) -> f64 {
        self.weighted(tx, |_, _| 1.0)
    }

    pub fn cgd(&self, tx: &PointCloud, p: &CorrespondenceMatrix, g: &CgdParams) -> Result<f64> {
        if p.shape() != (tx.len(), self.y.len()) {
            return Err(invalid(format!(
                "correspondence matrix is {:?}, clouds are {}x{}",
                p.shape(),
                tx.len(),
                self.y.len()
            )));
        }
        let gamma = g.gamma;
        Ok(self.weighted(tx, |i, j| (-gamma * p.get(i, j)).exp()))
    }

    /// Symmetric filtered sum of `weight(i, j) · d²` over nearest-neighbour
    /// pairs, `i` indexing `tx` and `j` indexing `y`.
    fn weighted(&self, tx: &PointCloud, weight: impl Fn(usize, usize) -> f64) -> f64 {
        let cutoff = self.filter.cutoff();
        let mut total = 0.0;
        for (i, p) in tx.points().iter().enumerate() {
            let (q, d2) = self.y_tree.nearest(p);
            if d2.sqrt() < cutoff {
                total += weight(i, q) * d2;
            }
        }
        let tx_tree = KdTree::build(tx.points());
        for (j, p) in self.y.points().iter().enumerate() {
            let (r, d2) = tx_tree.nearest(p);
            if d2.sqrt() < cutoff {
                total += weight(r, j) * d2;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(c: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_xyz(c).unwrap()
    }

    fn unit_filter() -> FilterParams {
        FilterParams::with_sampling_distance(1.0).unwrap()
    }

    #[test]
    fn nn_examples() {
        let p = Point3::zeros();
        assert_eq!(nn_distance(&p, &cloud(&[[1.0, 0.0, 0.0]])), (0, 1.0));
        let c = cloud(&[[3.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert_eq!(nn_distance(&p, &c), (1, 0.0));
        let tie = cloud(&[[2.0, 0.0, 0.0], [0.0, 2.0, 0.0]]);
        assert_eq!(nn_distance(&p, &tie), (0, 4.0));
    }

    #[test]
    fn sampling_distance_examples() {
        let line = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert_eq!(max_sampling_distance(&line, &line).unwrap(), 1.0);
        let wide = cloud(&[[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]]);
        let narrow = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert_eq!(max_sampling_distance(&wide, &narrow).unwrap(), 5.0);
        let single = cloud(&[[0.0, 0.0, 0.0]]);
        assert!(max_sampling_distance(&single, &line).is_err());
    }

    #[test]
    fn chamfer_examples() {
        let a = cloud(&[[0.0, 0.0, 0.0], [1.0, 2.0, 0.0]]);
        assert_eq!(chamfer(&a, &a, &unit_filter()), 0.0);
        let x = cloud(&[[0.0, 0.0, 0.0]]);
        let y = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&x, &y, &unit_filter()), 2.0);
        let x2 = cloud(&[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]]);
        let y2 = cloud(&[[0.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&x2, &y2, &unit_filter()), 0.0);
    }

    #[test]
    fn everything_filtered_gives_zero() {
        let x = cloud(&[[0.0, 0.0, 0.0]]);
        let y = cloud(&[[5.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&x, &y, &unit_filter()), 0.0);
    }

    #[test]
    fn cgd_examples() {
        let x = cloud(&[[0.0, 0.0, 0.0]]);
        let y = cloud(&[[1.0, 0.0, 0.0]]);
        let f = unit_filter();
        let g = CgdParams { gamma: 1.0 };
        let hi = CorrespondenceMatrix::from_vec(1, 1, vec![1.0]).unwrap();
        let lo = CorrespondenceMatrix::from_vec(1, 1, vec![-1.0]).unwrap();
        let a = cgd(&x, &y, &hi, &g, &f).unwrap();
        assert!((a - 2.0 * (-1f64).exp()).abs() < 1e-12);
        assert!((a - 0.73576).abs() < 1e-5);
        let b = cgd(&x, &y, &lo, &g, &f).unwrap();
        assert!((b - 2.0 * 1f64.exp()).abs() < 1e-12);
        assert!(b > 2.0);
        let zero = cgd(&x, &y, &lo, &CgdParams { gamma: 0.0 }, &f).unwrap();
        assert_eq!(zero, chamfer(&x, &y, &f));
    }

    #[test]
    fn cgd_shape_mismatch() {
        let x = cloud(&[[0.0, 0.0, 0.0]]);
        let y = cloud(&[[1.0, 0.0, 0.0]]);
        let p = CorrespondenceMatrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        assert!(cgd(&x, &y, &p, &CgdParams::default(), &unit_filter()).is_err());
    }

    #[test]
    fn filter_params_validation() {
        assert!(FilterParams::new(0.0, 2.0).is_err());
        assert!(FilterParams::new(1.0, -1.0).is_err());
        assert_eq!(FilterParams::with_sampling_distance(0.5).unwrap().cutoff(), 1.0);
    }
}
