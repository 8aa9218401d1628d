use super::{dist2, Point3, PointCloud};
use crate::error::{invalid, Result};

/// Greedy farthest point sampling.
///
/// The first pick is `start`; every later pick maximises the minimum squared
/// distance to the picks so far, with ties going to the lower index.
pub fn fps(cloud: &PointCloud, m: usize, start: usize) -> Result<Vec<usize>> {
    fps_points(cloud.points(), m, start)
}

pub(crate) fn fps_points(points: &[Point3], m: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(invalid(format!("fps needs 1 <= m <= N, got m={m}, N={n}")));
    }
    if start >= n {
        return Err(invalid(format!("fps start {start} out of range for {n} points")));
    }
    let mut picked = Vec::with_capacity(m);
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut current = start;
    loop {
        picked.push(current);
        taken[current] = true;
        if picked.len() == m {
            break;
        }
        let c = points[current];
        let mut next = usize::MAX;
        let mut far = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = dist2(p, &c);
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if min_d2[i] > far {
                far = min_d2[i];
                next = i;
            }
        }
        current = next;
    }
    Ok(picked)
}
