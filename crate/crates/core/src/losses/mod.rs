//! Self-supervised training losses over embeddings, each returning its value
//! together with the exact gradient with respect to the raw (unnormalised)
//! embedding rows.
//!
//! All three losses depend on embeddings only through cosines, so every
//! gradient is orthogonal to its row and rescaling a row leaves the value
//! unchanged.

use serde::{Deserialize, Serialize};

use crate::embedder::{LevelEmbeddings, OutputGrads};
use crate::error::{invalid, Result};
use crate::geometry::{dist2, NeighborhoodGraph, Point3, RigidTransform};
use crate::mat::{normalize_rows, normalize_rows_backward, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Focal exponent.
    pub beta: f64,
    /// Distance floor for the attraction weight, model units.
    pub epsilon: f64,
    pub lambda_r: f64,
    pub lambda_sim: f64,
    pub lambda_c: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta: 2.0,
            epsilon: 1e-3,
            lambda_r: 1.0,
            lambda_sim: 1.0,
            lambda_c: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 1.0) || !self.beta.is_finite() {
            return Err(invalid(format!("beta must be >= 1, got {}", self.beta)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(invalid(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        for (name, v) in [
            ("lambda_r", self.lambda_r),
            ("lambda_sim", self.lambda_sim),
            ("lambda_c", self.lambda_c),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Level weight, levels counted from 1.
    pub fn level_weight(level: usize) -> f64 {
        level as f64
    }
}

/// `max(c, 0)^β` and its derivative in `c`.
#[inline]
fn clamped_pow(c: f64, beta: f64) -> (f64, f64) {
    if c > 0.0 {
        let p = c.powf(beta - 1.0);
        (p * c, beta * p)
    } else {
        (0.0, 0.0)
    }
}

fn check_rows(points: usize, h: &Mat) -> Result<()> {
    if points != h.rows() {
        return Err(invalid(format!(
            "{points} points but {} embedding rows",
            h.rows()
        )));
    }
    Ok(())
}

/// Evaluates `Σ_{i≠j} term(i, j, cos_ij)` over one cloud's embeddings and
/// returns the value with the gradient at `h`. `term` yields the value and
/// its derivative in the cosine.
fn self_pairs(h: &Mat, term: impl Fn(usize, usize, f64) -> (f64, f64)) -> Result<(f64, Mat)> {
    let (u, norms) = normalize_rows(h)?;
    let c = u.matmul_t(&u);
    let n = h.rows();
    let mut g = Mat::zeros(n, n);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (v, dv) = term(i, j, c[(i, j)]);
            total += v;
            g[(i, j)] = dv;
        }
    }
    // d/dU of Σ g_ij u_i·u_j is (G + Gᵀ) U
    let mut du = g.matmul(&u);
    du.add_assign(&g.t_matmul(&u));
    Ok((total, normalize_rows_backward(&u, &norms, &du)))
}

fn pairwise_distances(points: &[Point3]) -> Mat {
    let n = points.len();
    let mut d = Mat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dist2(&points[i], &points[j]).sqrt();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Repulsion at one level: `Σ_{i≠j} d(xᵢ,xⱼ) · max(cos(hᵢ,hⱼ), 0)^β`.
pub fn repulsion_layer(points: &[Point3], h: &Mat, beta: f64) -> Result<(f64, Mat)> {
    check_rows(points.len(), h)?;
    if points.len() < 2 {
        return Err(invalid("repulsion needs at least 2 points"));
    }
    let d = pairwise_distances(points);
    self_pairs(h, |i, j, c| {
        let (v, dv) = clamped_pow(c, beta);
        let w = d[(i, j)];
        (w * v, w * dv)
    })
}

/// `Σ_l l · L_R(l)` over every returned level, levels counted from 1.
pub fn repulsion_total(levels: &LevelEmbeddings, cfg: &LossConfig) -> Result<(f64, Vec<Mat>)> {
    if levels.levels.is_empty() {
        return Err(invalid("repulsion needs at least one level"));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(levels.levels.len());
    for (i, level) in levels.levels.iter().enumerate() {
        let w = LossConfig::level_weight(i + 1);
        let (v, mut g) = repulsion_layer(&level.points, &level.features, cfg.beta)?;
        total += w * v;
        g.scale(w);
        grads.push(g);
    }
    Ok((total, grads))
}

/// Smoothness loss: graph neighbours are attracted with weight
/// `1 / max(d, ε)`, everyone else is repelled with weight `d`.
pub fn similarity(
    points: &[Point3],
    h: &Mat,
    graph: &NeighborhoodGraph,
    cfg: &LossConfig,
) -> Result<(f64, Mat)> {
    check_rows(points.len(), h)?;
    if graph.len() != points.len() {
        return Err(invalid(format!(
            "graph has {} rows for {} points",
            graph.len(),
            points.len()
        )));
    }
    let n = points.len();
    let mut is_nb = vec![false; n * n];
    for i in 0..n {
        for &j in graph.row(i) {
            is_nb[i * n + j] = true;
        }
    }
    let beta = cfg.beta;
    let eps = cfg.epsilon;
    self_pairs(h, |i, j, c| {
        let d = dist2(&points[i], &points[j]).sqrt();
        if is_nb[i * n + j] {
            let w = 1.0 / d.max(eps);
            let (v, dv) = clamped_pow(1.0 - c, beta);
            (w * v, -w * dv)
        } else {
            let (v, dv) = clamped_pow(c, beta);
            (d * v, d * dv)
        }
    })
}

/// Cross-cloud contrastive loss for an index-aligned pair: row `i` of `h_x`
/// is pulled towards `h_y` rows in `{i} ∪ N(yᵢ)` and pushed away from the
/// rest. Returns the value and gradients for `h_x` and `h_y`.
pub fn contrastive(h_x: &Mat, h_y: &Mat, graph_y: &NeighborhoodGraph) -> Result<(f64, Mat, Mat)> {
    if h_x.rows() != h_y.rows() {
        return Err(invalid(format!(
            "contrastive needs aligned rows, got {} and {}",
            h_x.rows(),
            h_y.rows()
        )));
    }
    if h_x.cols() != h_y.cols() {
        return Err(invalid("embedding widths differ"));
    }
    if graph_y.len() != h_y.rows() {
        return Err(invalid("graph_y does not match h_y"));
    }
    let n = h_x.rows();
    let (ux, nx) = normalize_rows(h_x)?;
    let (uy, ny) = normalize_rows(h_y)?;
    let c = ux.matmul_t(&uy);
    let mut g = Mat::filled(n, n, 1.0);
    let mut total = 0.0;
    for i in 0..n {
        g[(i, i)] = -1.0;
        for &j in graph_y.row(i) {
            g[(i, j)] = -1.0;
        }
        for j in 0..n {
            let cij = c[(i, j)];
            total += if g[(i, j)] < 0.0 { 1.0 - cij } else { cij };
        }
    }
    let dux = g.matmul(&uy);
    let duy = g.t_matmul(&ux);
    Ok((
        total,
        normalize_rows_backward(&ux, &nx, &dux),
        normalize_rows_backward(&uy, &ny, &duy),
    ))
}

/// `λ_R·L_R + λ_Sim·L_Sim + λ_C·L_C`.
pub fn total(loss_r: f64, loss_sim: f64, loss_c: f64, cfg: &LossConfig) -> f64 {
    cfg.lambda_r * loss_r + cfg.lambda_sim * loss_sim + cfg.lambda_c * loss_c
}

/// `‖R_predᵀ R_gt − I‖²_F + ‖t_pred − t_gt‖²`. Evaluation only.
pub fn transform_discrepancy(pred: &RigidTransform, gt: &RigidTransform) -> f64 {
    let m = pred.rotation().transpose() * gt.rotation() - nalgebra::Matrix3::identity();
    m.norm_squared() + (pred.translation() - gt.translation()).norm_squared()
}

/// Loss terms of one training pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub repulsion: f64,
    pub similarity: f64,
    pub contrastive: f64,
    pub total: f64,
}

/// One side of a training pair as seen by [`pair_loss`].
pub struct PairSide<'a> {
    pub points: &'a [Point3],
    pub out: &'a LevelEmbeddings,
    pub graph: &'a NeighborhoodGraph,
}

/// Full training objective for an index-aligned pair. Repulsion and
/// similarity are applied to both clouds, contrastive across them. Terms
/// with a zero weight are skipped entirely.
pub fn pair_loss(
    x: &PairSide<'_>,
    y: &PairSide<'_>,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, OutputGrads, OutputGrads)> {
    cfg.validate()?;
    let mut gx = blank_grads(x.out);
    let mut gy = blank_grads(y.out);
    let mut b = LossBreakdown::default();

    if cfg.lambda_r > 0.0 {
        for (side, grads) in [(x, &mut gx), (y, &mut gy)] {
            let (v, lg) = repulsion_total(side.out, cfg)?;
            b.repulsion += v;
            for (dst, mut g) in grads.levels.iter_mut().zip(lg) {
                g.scale(cfg.lambda_r);
                *dst = Some(g);
            }
        }
    }
    if cfg.lambda_sim > 0.0 {
        for (side, grads) in [(x, &mut gx), (y, &mut gy)] {
            let (v, mut g) = similarity(side.points, &side.out.embedding, side.graph, cfg)?;
            b.similarity += v;
            g.scale(cfg.lambda_sim);
            grads.embedding.as_mut().unwrap().add_assign(&g);
        }
    }
    if cfg.lambda_c > 0.0 {
        let (v, mut dx, mut dy) = contrastive(&x.out.embedding, &y.out.embedding, y.graph)?;
        b.contrastive = v;
        dx.scale(cfg.lambda_c);
        dy.scale(cfg.lambda_c);
        gx.embedding.as_mut().unwrap().add_assign(&dx);
        gy.embedding.as_mut().unwrap().add_assign(&dy);
    }
    b.total = total(b.repulsion, b.similarity, b.contrastive, cfg);
    Ok((b, gx, gy))
}

fn blank_grads(out: &LevelEmbeddings) -> OutputGrads {
    OutputGrads {
        embedding: Some(Mat::zeros(out.embedding.rows(), out.embedding.cols())),
        levels: vec![None; out.levels.len()],
    }
}
