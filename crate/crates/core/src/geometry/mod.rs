//! Geometric kernels: point clouds, rigid transforms, exact kNN, farthest
//! point sampling, closed-form rigid solving and the registration error
//! metrics.

mod kabsch;
mod kdtree;
mod metrics;
mod sampling;
mod transform;

use std::collections::HashSet;

use nalgebra::Vector3;

use crate::error::{invalid, Result};

pub use kabsch::kabsch;
pub use kdtree::KdTree;
pub use metrics::{euler_xyz_deg, rotation_rmse, translation_rmse, wrap_deg};
pub use sampling::fps;
pub(crate) use sampling::fps_points;
pub use transform::RigidTransform;

pub type Point3 = Vector3<f64>;

/// Squared Euclidean distance, summed in x, y, z order. Every distance
/// comparison in the crate goes through this so ties compare equal.
#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

/// Ordered set of 3D points with optional stable per-point ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    ids: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("point cloud must contain at least one point"));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points, ids: None })
    }

    pub fn with_ids(points: Vec<Point3>, ids: Vec<u32>) -> Result<Self> {
        let mut cloud = Self::new(points)?;
        if ids.len() != cloud.points.len() {
            return Err(invalid(format!(
                "{} ids for {} points",
                ids.len(),
                cloud.points.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(invalid(format!("duplicate point id {dup}")));
        }
        cloud.ids = Some(ids);
        Ok(cloud)
    }

    pub fn from_xyz(coords: &[[f64; 3]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    #[inline]
    pub fn point(&self, i: usize) -> &Point3 {
        &self.points[i]
    }

    pub fn ids(&self) -> Option<&[u32]> {
        self.ids.as_deref()
    }

    /// Ids if present, otherwise the point indices.
    pub fn ids_or_indices(&self) -> Vec<u32> {
        match &self.ids {
            Some(ids) => ids.clone(),
            None => (0..self.points.len() as u32).collect(),
        }
    }

    pub fn centroid(&self) -> Point3 {
        let sum = self
            .points
            .iter()
            .fold(Point3::zeros(), |acc, p| acc + p);
        sum / self.points.len() as f64
    }

    /// Sub-cloud at `indices` (in that order), carrying ids along.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("selection is empty"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(invalid(format!("index {bad} out of range for {} points", self.len())));
        }
        let points = indices.iter().map(|&i| self.points[i]).collect();
        match &self.ids {
            Some(ids) => Self::with_ids(points, indices.iter().map(|&i| ids[i]).collect()),
            None => Self::new(points),
        }
    }

    /// Same points, ids replaced.
    pub fn relabel(self, ids: Vec<u32>) -> Result<Self> {
        Self::with_ids(self.points, ids)
    }

    pub(crate) fn map_points(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
            ids: self.ids.clone(),
        }
    }

    /// Coordinates as an N×3 row-major matrix.
    pub fn to_mat(&self) -> crate::mat::Mat {
        let data = self.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        crate::mat::Mat::from_vec(self.len(), 3, data).expect("N×3 by construction")
    }
}

/// k nearest neighbours per point, self excluded, ascending distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodGraph {
    n: usize,
    k: usize,
    neighbors: Vec<usize>,
}

impl NeighborhoodGraph {
    /// Builds a graph from explicit rows. Each row must have exactly `k`
    /// entries and must not contain its own index. Distance ordering is the
    /// caller's responsibility.
    pub fn from_rows(k: usize, rows: &[Vec<usize>]) -> Result<Self> {
        let n = rows.len();
        let mut neighbors = Vec::with_capacity(n * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(invalid(format!("row {i} has {} neighbours, expected {k}", row.len())));
            }
            if row.iter().any(|&j| j == i || j >= n) {
                return Err(invalid(format!("row {i} contains itself or an out-of-range index")));
            }
            neighbors.extend_from_slice(row);
        }
        Ok(Self { n, k, neighbors })
    }

    /// A graph with no neighbours, for `n` points.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            k: 0,
            neighbors: Vec::new(),
        }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.k > 0 && self.row(i).contains(&j)
    }
}

/// Exact k nearest neighbours of every point (self excluded, ties to the
/// lower index).
pub fn knn(cloud: &PointCloud, k: usize) -> Result<NeighborhoodGraph> {
    knn_points(cloud.points(), k)
}

pub(crate) fn knn_points(points: &[Point3], k: usize) -> Result<NeighborhoodGraph> {
    let n = points.len();
    if k == 0 || k >= n {
        return Err(invalid(format!("knn needs 1 <= k < N, got k={k}, N={n}")));
    }
    let tree = KdTree::build(points);
    let mut neighbors = Vec::with_capacity(n * k);
    for (i, p) in points.iter().enumerate() {
        let hits = tree.knn(p, k, Some(i));
        neighbors.extend(hits.iter().map(|&(_, j)| j));
    }
    Ok(NeighborhoodGraph { n, k, neighbors })
}
