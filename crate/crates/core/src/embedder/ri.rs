use crate::error::{invalid, Result};
use crate::geometry::{dist2, KdTree, PointCloud};
use crate::mat::Mat;

/// Per-point descriptors that do not change under rigid motion of the
/// whole cloud.
///
/// Row layout for a point `p` with `k` nearest neighbours:
///
/// | column      | value                                                   |
/// |-------------|---------------------------------------------------------|
/// | 0           | distance from `p` to the cloud centroid `c`             |
/// | 1 ..= k     | distances to the k nearest neighbours, ascending        |
/// | k + 1       | cosine of the angle between `c − p` and `nn₁ − p`       |
/// | k + 2       | mean of the k neighbour distances                       |
/// | k + 3       | population standard deviation of those distances        |
///
/// The cosine is 0 when `p` sits exactly on the centroid. Distances are in
/// model units, so scaling the cloud scales every column except the cosine.
#[derive(Debug, Clone, PartialEq)]
pub struct RIFeatures {
    pub features: Mat,
}

impl RIFeatures {
    pub fn dim(k: usize) -> usize {
        k + 4
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

pub fn ri_features(cloud: &PointCloud, k: usize) -> Result<RIFeatures> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(invalid(format!("ri_features needs 1 <= k < N, got k={k}, N={n}")));
    }
    let pts = cloud.points();
    let centroid = cloud.centroid();
    let tree = KdTree::build(pts);
    let mut features = Mat::zeros(n, RIFeatures::dim(k));
    for (i, p) in pts.iter().enumerate() {
        let hits = tree.knn(p, k, Some(i));
        let row = features.row_mut(i);
        let to_c = centroid - p;
        row[0] = dist2(&centroid, p).sqrt();
        let mut sum = 0.0;
        for (m, &(d2, _)) in hits.iter().enumerate() {
            let d = d2.sqrt();
            row[1 + m] = d;
            sum += d;
        }
        let to_nn = pts[hits[0].1] - p;
        let denom = to_c.norm() * to_nn.norm();
        row[k + 1] = if denom > 0.0 {
            (to_c.dot(&to_nn) / denom).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let mean = sum / k as f64;
        let var = row[1..=k].iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / k as f64;
        row[k + 2] = mean;
        row[k + 3] = var.sqrt();
    }
    Ok(RIFeatures { features })
}
