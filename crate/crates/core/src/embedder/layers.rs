//! Network building blocks with explicit forward caches and reverse passes.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::geometry::NeighborhoodGraph;
use crate::mat::Mat;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const NORM_EPS: f64 = 1e-5;

#[inline]
fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

#[inline]
fn leaky_grad(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Affine map on row vectors, `y = x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: Mat::zeros(d_in, d_out),
            bias: vec![0.0; d_out],
        }
    }

    /// Uniform in `±1/√fan_in` for weights and biases.
    pub fn init(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let mut l = Self::zeros(d_in, d_out);
        for w in l.weight.as_mut_slice() {
            *w = rng.random_range(-bound..bound);
        }
        for b in &mut l.bias {
            *b = rng.random_range(-bound..bound);
        }
        l
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut y = x.matmul(&self.weight);
        add_bias(&mut y, &self.bias);
        y
    }
}

fn add_bias(y: &mut Mat, b: &[f64]) {
    for i in 0..y.rows() {
        for (v, bb) in y.row_mut(i).iter_mut().zip(b) {
            *v += bb;
        }
    }
}

fn add_col_sums(acc: &mut [f64], m: &Mat) {
    for row in m.row_iter() {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

/// Normalisation over the feature dimension of every row, with a learnable
/// per-feature gain and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        Self {
            gain: vec![1.0; d],
            shift: vec![0.0; d],
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            gain: vec![0.0; d],
            shift: vec![0.0; d],
        }
    }
}

/// Two-layer perceptron with leaky-rectifier activations, followed by
/// per-row normalisation: `LN(σ(σ(x·W1 + b1)·W2 + b2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perceptron {
    pub fc1: Linear,
    pub fc2: Linear,
    pub norm: LayerNorm,
}

/// What the tail of a perceptron (everything after the first affine map)
/// needs for its reverse pass.
#[derive(Debug, Clone)]
pub struct TailCache {
    z1: Mat,
    z2: Mat,
    xhat: Mat,
    inv_std: Vec<f64>,
}

impl TailCache {
    fn branches(&self, out: &mut Vec<u32>) {
        for z in self.z1.as_slice().iter().chain(self.z2.as_slice()) {
            out.push(u32::from(*z >= 0.0));
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointwiseCache {
    x: Mat,
    tail: TailCache,
}

#[derive(Debug, Clone)]
pub struct EdgeCache {
    h: Mat,
    graph: NeighborhoodGraph,
    tail: TailCache,
    argmax: Vec<usize>,
}

impl PointwiseCache {
    pub(crate) fn branches(&self, out: &mut Vec<u32>) {
        self.tail.branches(out);
    }
}

impl EdgeCache {
    pub(crate) fn branches(&self, out: &mut Vec<u32>) {
        self.tail.branches(out);
        out.extend(self.argmax.iter().map(|&a| a as u32));
    }
}

impl Perceptron {
    pub fn init(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            fc1: Linear::init(d_in, d_out, rng),
            fc2: Linear::init(d_out, d_out, rng),
            norm: LayerNorm::new(d_out),
        }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            fc1: Linear::zeros(d_in, d_out),
            fc2: Linear::zeros(d_out, d_out),
            norm: LayerNorm::zeros(d_out),
        }
    }

    pub fn d_out(&self) -> usize {
        self.fc2.d_out()
    }

    /// Tensors in a fixed order with their local names.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("fc1.weight", self.fc1.weight.as_slice()),
            ("fc1.bias", &self.fc1.bias),
            ("fc2.weight", self.fc2.weight.as_slice()),
            ("fc2.bias", &self.fc2.bias),
            ("norm.gain", &self.norm.gain),
            ("norm.shift", &self.norm.shift),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 6] {
        [
            ("fc1.weight", self.fc1.weight.as_mut_slice()),
            ("fc1.bias", &mut self.fc1.bias),
            ("fc2.weight", self.fc2.weight.as_mut_slice()),
            ("fc2.bias", &mut self.fc2.bias),
            ("norm.gain", &mut self.norm.gain),
            ("norm.shift", &mut self.norm.shift),
        ]
    }

    pub fn shapes(&self) -> [Vec<usize>; 6] {
        let (i, h) = self.fc1.weight.shape();
        let o = self.fc2.d_out();
        [vec![i, h], vec![h], vec![h, o], vec![o], vec![o], vec![o]]
    }

    fn tail_forward(&self, z1: Mat) -> (Mat, TailCache) {
        let mut a1 = z1.clone();
        a1.as_mut_slice().iter_mut().for_each(|v| *v = leaky(*v));
        let z2 = self.fc2.forward(&a1);
        drop(a1);
        let d = z2.cols();
        let mut xhat = Mat::zeros(z2.rows(), d);
        let mut y = Mat::zeros(z2.rows(), d);
        let mut inv_std = Vec::with_capacity(z2.rows());
        let mut act = vec![0.0; d];
        for r in 0..z2.rows() {
            for (a, v) in act.iter_mut().zip(z2.row(r)) {
                *a = leaky(*v);
            }
            let mean = act.iter().sum::<f64>() / d as f64;
            let var = act.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            inv_std.push(inv);
            let xr = xhat.row_mut(r);
            for (x, a) in xr.iter_mut().zip(&act) {
                *x = (a - mean) * inv;
            }
            let yr = y.row_mut(r);
            for c in 0..d {
                yr[c] = self.norm.gain[c] * xhat[(r, c)] + self.norm.shift[c];
            }
        }
        (
            y,
            TailCache {
                z1,
                z2,
                xhat,
                inv_std,
            },
        )
    }

    /// Reverse of the tail; returns the gradient at `z1` and accumulates
    /// fc2 / norm gradients into `grad`.
    fn tail_backward(&self, cache: &TailCache, dy: &Mat, grad: &mut Perceptron) -> Mat {
        let (rows, d) = dy.shape();
        let mut dz2 = Mat::zeros(rows, d);
        let mut dxhat = vec![0.0; d];
        for r in 0..rows {
            let dyr = dy.row(r);
            let xr = cache.xhat.row(r);
            for c in 0..d {
                grad.norm.gain[c] += dyr[c] * xr[c];
                grad.norm.shift[c] += dyr[c];
                dxhat[c] = dyr[c] * self.norm.gain[c];
            }
            let m1 = dxhat.iter().sum::<f64>() / d as f64;
            let m2 = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            let inv = cache.inv_std[r];
            let z2r = cache.z2.row(r);
            let out = dz2.row_mut(r);
            for c in 0..d {
                let da = inv * (dxhat[c] - m1 - xr[c] * m2);
                out[c] = da * leaky_grad(z2r[c]);
            }
        }
        let mut a1 = cache.z1.clone();
        a1.as_mut_slice().iter_mut().for_each(|v| *v = leaky(*v));
        a1.t_matmul_acc(&dz2, &mut grad.fc2.weight);
        add_col_sums(&mut grad.fc2.bias, &dz2);
        let mut dz1 = dz2.matmul_t(&self.fc2.weight);
        for (g, z) in dz1.as_mut_slice().iter_mut().zip(cache.z1.as_slice()) {
            *g *= leaky_grad(*z);
        }
        dz1
    }

    /// Row-wise application.
    pub fn forward(&self, x: &Mat) -> Result<(Mat, PointwiseCache)> {
        if x.cols() != self.fc1.d_in() {
            return Err(invalid(format!(
                "perceptron expects {} input features, got {}",
                self.fc1.d_in(),
                x.cols()
            )));
        }
        let z1 = self.fc1.forward(x);
        let (y, tail) = self.tail_forward(z1);
        Ok((y, PointwiseCache { x: x.clone(), tail }))
    }

    pub fn backward(&self, cache: &PointwiseCache, dy: &Mat, grad: &mut Perceptron) -> Mat {
        let dz1 = self.tail_backward(&cache.tail, dy, grad);
        cache.x.t_matmul_acc(&dz1, &mut grad.fc1.weight);
        add_col_sums(&mut grad.fc1.bias, &dz1);
        dz1.matmul_t(&self.fc1.weight)
    }

    /// EdgeConv: for every point `i`, `max_j f([h_i ‖ h_j − h_i])` over the
    /// graph neighbours `j`, with `f` this perceptron. The maximum is taken
    /// per feature; ties go to the lower neighbour index.
    pub fn edge_forward(&self, h: &Mat, graph: &NeighborhoodGraph) -> Result<(Mat, EdgeCache)> {
        let (n, d) = h.shape();
        if self.fc1.d_in() != 2 * d {
            return Err(invalid(format!(
                "edge conv expects {} input features, got {d}",
                self.fc1.d_in() / 2
            )));
        }
        if graph.len() != n || graph.k() == 0 {
            return Err(invalid(format!(
                "graph covers {} points with k={}, features have {n} rows",
                graph.len(),
                graph.k()
            )));
        }
        let k = graph.k();
        let hid = self.fc1.d_out();
        // [h_i ‖ h_j − h_i]·W1 = h_i·(Wa − Wb) + h_j·Wb
        let (wa, wb) = split_rows(&self.fc1.weight, d);
        let mut wdiff = wa;
        for (a, b) in wdiff.as_mut_slice().iter_mut().zip(wb.as_slice()) {
            *a -= b;
        }
        let a = h.matmul(&wdiff);
        let b = h.matmul(&wb);
        let mut z1 = Mat::zeros(n * k, hid);
        for i in 0..n {
            for (m, &j) in graph.row(i).iter().enumerate() {
                let row = z1.row_mut(i * k + m);
                for ((z, av), (bv, bias)) in row
                    .iter_mut()
                    .zip(a.row(i))
                    .zip(b.row(j).iter().zip(&self.fc1.bias))
                {
                    *z = av + bv + bias;
                }
            }
        }
        let (y, tail) = self.tail_forward(z1);
        let dout = y.cols();
        let mut out = Mat::zeros(n, dout);
        let mut argmax = vec![0usize; n * dout];
        for i in 0..n {
            let nbrs = graph.row(i);
            for c in 0..dout {
                let mut best_m = 0;
                let mut best = y[(i * k, c)];
                for m in 1..k {
                    let v = y[(i * k + m, c)];
                    if v > best || (v == best && nbrs[m] < nbrs[best_m]) {
                        best = v;
                        best_m = m;
                    }
                }
                out[(i, c)] = best;
                argmax[i * dout + c] = best_m;
            }
        }
        Ok((
            out,
            EdgeCache {
                h: h.clone(),
                graph: graph.clone(),
                tail,
                argmax,
            },
        ))
    }

    pub fn edge_backward(&self, cache: &EdgeCache, dout: &Mat, grad: &mut Perceptron) -> Mat {
        let (n, d) = cache.h.shape();
        let k = cache.graph.k();
        let c_out = dout.cols();
        let mut dy = Mat::zeros(n * k, c_out);
        for i in 0..n {
            for c in 0..c_out {
                let m = cache.argmax[i * c_out + c];
                dy[(i * k + m, c)] = dout[(i, c)];
            }
        }
        let dz1 = self.tail_backward(&cache.tail, &dy, grad);
        let hid = dz1.cols();
        let mut da = Mat::zeros(n, hid);
        let mut db = Mat::zeros(n, hid);
        for i in 0..n {
            for (m, &j) in cache.graph.row(i).iter().enumerate() {
                let g = dz1.row(i * k + m);
                for (t, v) in da.row_mut(i).iter_mut().zip(g) {
                    *t += v;
                }
                for (t, v) in db.row_mut(j).iter_mut().zip(g) {
                    *t += v;
                }
            }
        }
        add_col_sums(&mut grad.fc1.bias, &da);
        // W1 rows [0, d) are Wa, rows [d, 2d) are Wb
        let d_wa = cache.h.t_matmul(&da);
        let mut db_minus_da = db.clone();
        for (t, v) in db_minus_da.as_mut_slice().iter_mut().zip(da.as_slice()) {
            *t -= v;
        }
        let d_wb = cache.h.t_matmul(&db_minus_da);
        {
            let gw = grad.fc1.weight.as_mut_slice();
            let (top, bottom) = gw.split_at_mut(d * hid);
            for (t, v) in top.iter_mut().zip(d_wa.as_slice()) {
                *t += v;
            }
            for (t, v) in bottom.iter_mut().zip(d_wb.as_slice()) {
                *t += v;
            }
        }
        let (wa, wb) = split_rows(&self.fc1.weight, d);
        let mut wdiff = wa;
        for (a, b) in wdiff.as_mut_slice().iter_mut().zip(wb.as_slice()) {
            *a -= b;
        }
        let mut dh = da.matmul_t(&wdiff);
        dh.add_assign(&db.matmul_t(&wb));
        dh
    }
}

fn split_rows(w: &Mat, at: usize) -> (Mat, Mat) {
    let cols = w.cols();
    let (top, bottom) = w.as_slice().split_at(at * cols);
    (
        Mat::from_vec(at, cols, top.to_vec()).expect("split"),
        Mat::from_vec(w.rows() - at, cols, bottom.to_vec()).expect("split"),
    )
}

/// Inverse-distance interpolation from a coarse point set onto a fine one,
/// using up to three nearest coarse points.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolation {
    pub(crate) coarse_len: usize,
    pub(crate) neighbors: Vec<Vec<(usize, f64)>>,
}

/// Keeps weights finite when a fine point coincides with a coarse one.
const INTERP_DIST_FLOOR: f64 = 1e-10;

impl Interpolation {
    pub fn new(coarse: &[crate::geometry::Point3], fine: &[crate::geometry::Point3]) -> Self {
        let tree = crate::geometry::KdTree::build(coarse);
        let kk = coarse.len().min(3);
        let neighbors = fine
            .iter()
            .map(|p| {
                let hits = tree.knn(p, kk, None);
                let w: Vec<f64> = hits
                    .iter()
                    .map(|(d2, _)| 1.0 / (d2.sqrt() + INTERP_DIST_FLOOR))
                    .collect();
                let total: f64 = w.iter().sum();
                hits.iter()
                    .zip(w)
                    .map(|(&(_, j), wj)| (j, wj / total))
                    .collect()
            })
            .collect();
        Self {
            coarse_len: coarse.len(),
            neighbors,
        }
    }

    pub fn forward(&self, coarse_feat: &Mat) -> Mat {
        let mut out = Mat::zeros(self.neighbors.len(), coarse_feat.cols());
        for (i, nb) in self.neighbors.iter().enumerate() {
            let row = out.row_mut(i);
            for &(j, w) in nb {
                for (o, v) in row.iter_mut().zip(coarse_feat.row(j)) {
                    *o += w * v;
                }
            }
        }
        out
    }

    pub fn backward(&self, dout: &Mat) -> Mat {
        let mut d = Mat::zeros(self.coarse_len, dout.cols());
        for (i, nb) in self.neighbors.iter().enumerate() {
            for &(j, w) in nb {
                for (t, g) in d.row_mut(j).iter_mut().zip(dout.row(i)) {
                    *t += w * g;
                }
            }
        }
        d
    }
}
