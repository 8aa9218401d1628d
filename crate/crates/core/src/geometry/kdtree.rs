use std::cmp::Ordering;

use super::{dist2, Point3};

const LEAF_SIZE: usize = 8;
const BRUTE_FORCE_BELOW: usize = 32;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Exact nearest-neighbour index over a borrowed point slice.
///
/// Results are ordered by `(squared distance, index)`, so equal distances
/// resolve to the lower index. Below 32 points the tree degenerates to a
/// single leaf, i.e. a linear scan.
#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [Point3],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[inline]
fn key_cmp(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Point3]) -> Self {
        let mut tree = Self {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if points.len() < BRUTE_FORCE_BELOW {
            tree.nodes.push(Node::Leaf {
                start: 0,
                end: points.len(),
            });
        } else {
            tree.build_node(0, points.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        if hi[axis] - lo[axis] <= 0.0 {
            // all coincident
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
        });
        let value = pts[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `query` as `(squared distance, index)`,
    /// ascending, optionally skipping one index. Returns fewer than `k` hits
    /// only when the cloud is too small.
    pub fn knn(&self, query: &Point3, k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, query, k, exclude, &mut best);
        }
        best
    }

    /// Nearest point as `(index, squared distance)`.
    pub fn nearest(&self, query: &Point3) -> (usize, f64) {
        let hit = self.knn(query, 1, None);
        let (d2, i) = hit[0];
        (i, d2)
    }

    fn search(
        &self,
        node: usize,
        q: &Point3,
        k: usize,
        exclude: Option<usize>,
        best: &mut Vec<(f64, usize)>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let cand = (dist2(q, &self.points[i]), i);
                    if best.len() == k && key_cmp(&cand, &best[k - 1]) != Ordering::Less {
                        continue;
                    }
                    let pos = best
                        .binary_search_by(|probe| key_cmp(probe, &cand))
                        .unwrap_or_else(|p| p);
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, best);
                // equal bound must still be visited: it may hold a lower-index tie
                if best.len() < k || diff * diff <= best[k - 1].0 {
                    self.search(far, q, k, exclude, best);
                }
            }
        }
    }
}
