use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{EdgeCache, Interpolation, Perceptron, PointwiseCache};
use super::ri::RIFeatures;
use crate::error::{invalid, Result};
use crate::geometry::fps_points;
use crate::geometry::{knn_points, NeighborhoodGraph, Point3, PointCloud};
use crate::mat::Mat;

/// Smallest cloud the network accepts.
pub const MIN_POINTS: usize = 16;

/// Shape of the hierarchical network.
///
/// With `L = pool_factors.len()` levels the encoder runs one EdgeConv per
/// level before each FPS pooling step, the decoder runs one interpolation +
/// skip-concatenation + perceptron per level on the way back up, and the
/// head runs `head_widths.len()` EdgeConvs over `[decoder output ‖ RI]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Neighbours per point for RI features and every graph.
    pub k: usize,
    pub pool_factors: Vec<f64>,
    pub encoder_widths: Vec<usize>,
    /// Deepest level first.
    pub decoder_widths: Vec<usize>,
    /// Last entry is the embedding dimension.
    pub head_widths: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            k: 10,
            pool_factors: vec![0.5, 0.25],
            encoder_widths: vec![64, 128],
            decoder_widths: vec![256, 128],
            head_widths: vec![128, 128, 128],
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let l = self.pool_factors.len();
        if self.k == 0 {
            return Err(invalid("architecture: k must be positive"));
        }
        if l == 0 {
            return Err(invalid("architecture: need at least one pooling level"));
        }
        if self.encoder_widths.len() != l || self.decoder_widths.len() != l {
            return Err(invalid(format!(
                "architecture: {l} pooling levels need {l} encoder and decoder widths"
            )));
        }
        if self.head_widths.is_empty() {
            return Err(invalid("architecture: head needs at least one layer"));
        }
        if self
            .encoder_widths
            .iter()
            .chain(&self.decoder_widths)
            .chain(&self.head_widths)
            .any(|&w| w == 0)
        {
            return Err(invalid("architecture: widths must be positive"));
        }
        if self
            .pool_factors
            .iter()
            .any(|&f| !(f > 0.0 && f <= 1.0))
        {
            return Err(invalid("architecture: pool factors must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.pool_factors.len()
    }

    pub fn ri_dim(&self) -> usize {
        RIFeatures::dim(self.k)
    }

    pub fn out_dim(&self) -> usize {
        *self.head_widths.last().expect("validated")
    }

    /// Point counts per level for an input of `n` points.
    pub fn level_sizes(&self, n: usize) -> Vec<usize> {
        let mut sizes = vec![n];
        for f in &self.pool_factors {
            let prev = *sizes.last().unwrap() as f64;
            sizes.push(((f * prev).ceil() as usize).max(1));
        }
        sizes
    }
}

/// Learnable weights of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderParams {
    pub arch: Architecture,
    pub encoder: Vec<Perceptron>,
    pub decoder: Vec<Perceptron>,
    pub head: Vec<Perceptron>,
}

fn block_dims(arch: &Architecture) -> (Vec<(usize, usize)>, Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let l = arch.levels();
    let mut enc = Vec::with_capacity(l);
    let mut d_in = arch.ri_dim();
    for &w in &arch.encoder_widths {
        enc.push((2 * d_in, w));
        d_in = w;
    }
    // decoder runs from level L-1 down to 0
    let mut dec = Vec::with_capacity(l);
    let mut cur = arch.encoder_widths[l - 1];
    for (step, &w) in arch.decoder_widths.iter().enumerate() {
        let level = l - 1 - step;
        dec.push((cur + arch.encoder_widths[level], w));
        cur = w;
    }
    let mut head = Vec::with_capacity(arch.head_widths.len());
    let mut d_in = cur + arch.ri_dim();
    for &w in &arch.head_widths {
        head.push((2 * d_in, w));
        d_in = w;
    }
    (enc, dec, head)
}

impl EmbedderParams {
    /// Fan-in scaled uniform initialisation, deterministic per seed.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (enc, dec, head) = block_dims(arch);
        let mut make = |dims: Vec<(usize, usize)>| {
            dims.into_iter()
                .map(|(i, o)| Perceptron::init(i, o, &mut rng))
                .collect::<Vec<_>>()
        };
        let encoder = make(enc);
        let decoder = make(dec);
        let head = make(head);
        Ok(Self {
            arch: arch.clone(),
            encoder,
            decoder,
            head,
        })
    }

    /// All-zero tensors with this architecture (gradient accumulators).
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let (enc, dec, head) = block_dims(arch);
        let make = |dims: Vec<(usize, usize)>| {
            dims.into_iter()
                .map(|(i, o)| Perceptron::zeros(i, o))
                .collect::<Vec<_>>()
        };
        Ok(Self {
            arch: arch.clone(),
            encoder: make(enc),
            decoder: make(dec),
            head: make(head),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.arch).expect("architecture was validated at construction")
    }

    fn blocks(&self) -> impl Iterator<Item = (String, &Perceptron)> {
        let named = |prefix: &'static str, v: &'static str| move |(i, p)| (format!("{prefix}.{i}{v}"), p);
        self.encoder
            .iter()
            .enumerate()
            .map(named("encoder", ""))
            .chain(self.decoder.iter().enumerate().map(named("decoder", "")))
            .chain(self.head.iter().enumerate().map(named("head", "")))
    }

    /// Every tensor with its qualified name and shape, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (prefix, block) in self.blocks() {
            let shapes = block.shapes();
            for ((name, data), shape) in block.tensors().into_iter().zip(shapes) {
                out.push((format!("{prefix}.{name}"), shape, data));
            }
        }
        out
    }

    /// Mutable tensors in the same order as [`EmbedderParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .chain(self.head.iter_mut())
            .flat_map(|b| b.tensors_mut().map(|(_, t)| t))
            .collect()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.encoder
            .iter()
            .chain(self.decoder.iter())
            .chain(self.head.iter())
            .flat_map(|b| b.tensors().map(|(_, t)| t))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &EmbedderParams, scale: f64) {
        let src = other.tensors();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += scale * b;
            }
        }
    }
}

/// Parameter-independent part of a forward pass: graphs, pooling indices and
/// interpolation weights, all functions of the input coordinates only.
#[derive(Debug, Clone)]
pub struct Structure {
    /// Coordinates per level, level 0 being the input.
    pub coords: Vec<Vec<Point3>>,
    /// Graph per encoder level (levels 0 .. L-1).
    pub graphs: Vec<NeighborhoodGraph>,
    /// FPS indices for level l+1 into level l.
    pub fps: Vec<Vec<usize>>,
    /// `interps[l]` maps level l+1 features onto level l points.
    pub interps: Vec<Interpolation>,
}

impl Structure {
    pub fn build(arch: &Architecture, points: &[Point3]) -> Result<Self> {
        arch.validate()?;
        let n = points.len();
        if n < MIN_POINTS {
            return Err(invalid(format!(
                "network needs at least {MIN_POINTS} points, got {n}"
            )));
        }
        let sizes = arch.level_sizes(n);
        let mut coords = vec![points.to_vec()];
        let mut fps = Vec::new();
        for &m in &sizes[1..] {
            let prev = coords.last().unwrap();
            let idx = fps_points(prev, m, 0)?;
            let next = idx.iter().map(|&i| prev[i]).collect();
            fps.push(idx);
            coords.push(next);
        }
        let mut graphs = Vec::new();
        for level in coords.iter().take(arch.levels()) {
            let k = arch.k.min(level.len() - 1);
            if k == 0 {
                return Err(invalid("a pooled level collapsed to a single point"));
            }
            graphs.push(knn_points(level, k)?);
        }
        let interps = (0..arch.levels())
            .map(|l| Interpolation::new(&coords[l + 1], &coords[l]))
            .collect();
        Ok(Self {
            coords,
            graphs,
            fps,
            interps,
        })
    }
}

/// Pooled and decoded embeddings at every level plus the final per-point
/// embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelEmbeddings {
    /// `levels[i]` is level `i + 1` in the repulsion weighting. Order: the
    /// pooled features after each FPS step (coarser and coarser), then the
    /// decoder outputs after each interpolation step (finer and finer).
    pub levels: Vec<Level>,
    /// N×D final embeddings, one row per input point.
    pub embedding: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub points: Vec<Point3>,
    pub features: Mat,
    /// For pooled levels, FPS indices into the previous (finer) level.
    pub fps_indices: Option<Vec<usize>>,
}

/// Forward record sufficient for exact reverse-mode gradients.
#[derive(Debug, Clone)]
pub struct EmbedderTrace {
    structure: Structure,
    ri: Mat,
    encoder: Vec<EdgeCache>,
    decoder: Vec<PointwiseCache>,
    head: Vec<EdgeCache>,
    enc_widths: Vec<usize>,
    dec_widths: Vec<usize>,
}

impl EmbedderTrace {
    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    /// Discrete choices made by the forward pass: the side of every leaky
    /// rectifier and the winner of every max reduction. The outputs are
    /// smooth in the parameters wherever this pattern stays fixed.
    pub fn branch_pattern(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for c in &self.encoder {
            c.branches(&mut out);
        }
        for c in &self.decoder {
            c.branches(&mut out);
        }
        for c in &self.head {
            c.branches(&mut out);
        }
        out
    }

    /// Re-runs the forward pass over the recorded structure and inputs.
    pub fn replay(&self, params: &EmbedderParams) -> Result<LevelEmbeddings> {
        self.replay_traced(params).map(|(out, _)| out)
    }

    /// As [`EmbedderTrace::replay`], also returning the new trace.
    pub fn replay_traced(&self, params: &EmbedderParams) -> Result<(LevelEmbeddings, EmbedderTrace)> {
        forward(params, &self.structure, &self.ri)
    }
}

/// Gradients of a scalar loss with respect to the network outputs. Missing
/// entries are treated as zero.
#[derive(Debug, Clone, Default)]
pub struct OutputGrads {
    pub embedding: Option<Mat>,
    pub levels: Vec<Option<Mat>>,
}

pub fn embed(
    params: &EmbedderParams,
    cloud: &PointCloud,
    ri: &RIFeatures,
) -> Result<(LevelEmbeddings, EmbedderTrace)> {
    if ri.len() != cloud.len() {
        return Err(invalid(format!(
            "{} RI rows for {} points",
            ri.len(),
            cloud.len()
        )));
    }
    if ri.features.cols() != params.arch.ri_dim() {
        return Err(invalid(format!(
            "RI features have {} columns, architecture expects {}",
            ri.features.cols(),
            params.arch.ri_dim()
        )));
    }
    let structure = Structure::build(&params.arch, cloud.points())?;
    forward(params, &structure, &ri.features)
}

fn forward(
    params: &EmbedderParams,
    s: &Structure,
    ri: &Mat,
) -> Result<(LevelEmbeddings, EmbedderTrace)> {
    let l_count = params.arch.levels();
    let mut enc_out: Vec<Mat> = Vec::with_capacity(l_count);
    let mut enc_cache = Vec::with_capacity(l_count);
    let mut pooled: Vec<Mat> = Vec::with_capacity(l_count);
    let mut input = ri.clone();
    for l in 0..l_count {
        let (out, cache) = params.encoder[l].edge_forward(&input, &s.graphs[l])?;
        let p = out.gather_rows(&s.fps[l]);
        enc_out.push(out);
        enc_cache.push(cache);
        input = p.clone();
        pooled.push(p);
    }

    let mut cur = pooled.last().unwrap().clone();
    let mut dec_out = Vec::with_capacity(l_count);
    let mut dec_cache = Vec::with_capacity(l_count);
    for step in 0..l_count {
        let level = l_count - 1 - step;
        let up = s.interps[level].forward(&cur);
        let z = up.hcat(&enc_out[level])?;
        let (out, cache) = params.decoder[step].forward(&z)?;
        dec_cache.push(cache);
        dec_out.push(out.clone());
        cur = out;
    }

    let mut h = cur.hcat(ri)?;
    let mut head_cache = Vec::with_capacity(params.head.len());
    for block in &params.head {
        let (out, cache) = block.edge_forward(&h, &s.graphs[0])?;
        head_cache.push(cache);
        h = out;
    }

    let mut levels = Vec::with_capacity(2 * l_count);
    for (l, p) in pooled.into_iter().enumerate() {
        levels.push(Level {
            points: s.coords[l + 1].clone(),
            features: p,
            fps_indices: Some(s.fps[l].clone()),
        });
    }
    for (step, d) in dec_out.into_iter().enumerate() {
        let level = l_count - 1 - step;
        levels.push(Level {
            points: s.coords[level].clone(),
            features: d,
            fps_indices: None,
        });
    }
    let trace = EmbedderTrace {
        structure: s.clone(),
        ri: ri.clone(),
        encoder: enc_cache,
        decoder: dec_cache,
        head: head_cache,
        enc_widths: params.arch.encoder_widths.clone(),
        dec_widths: params.arch.decoder_widths.clone(),
    };
    Ok((LevelEmbeddings { levels, embedding: h }, trace))
}

/// Reverse pass: gradients of the loss with respect to every parameter.
pub fn backward(
    params: &EmbedderParams,
    trace: &EmbedderTrace,
    grads: &OutputGrads,
) -> Result<EmbedderParams> {
    let mut g = params.zeros_like();
    backward_into(params, trace, grads, &mut g)?;
    Ok(g)
}

/// As [`backward`], accumulating into `acc`.
pub fn backward_into(
    params: &EmbedderParams,
    trace: &EmbedderTrace,
    grads: &OutputGrads,
    acc: &mut EmbedderParams,
) -> Result<()> {
    let l_count = params.arch.levels();
    if trace.enc_widths != params.arch.encoder_widths || trace.dec_widths != params.arch.decoder_widths {
        return Err(invalid("trace was recorded with a different architecture"));
    }
    if grads.levels.len() > 2 * l_count {
        return Err(invalid(format!(
            "{} level gradients for {} levels",
            grads.levels.len(),
            2 * l_count
        )));
    }
    let s = &trace.structure;
    let n0 = s.coords[0].len();
    let level_grad = |i: usize, rows: usize, cols: usize| -> Result<Option<&Mat>> {
        match grads.levels.get(i).and_then(|g| g.as_ref()) {
            Some(m) if m.shape() != (rows, cols) => Err(invalid(format!(
                "level {i} gradient is {:?}, expected {rows}x{cols}",
                m.shape()
            ))),
            other => Ok(other),
        }
    };

    let out_dim = params.arch.out_dim();
    let mut dh = match &grads.embedding {
        Some(m) if m.shape() != (n0, out_dim) => {
            return Err(invalid(format!(
                "embedding gradient is {:?}, expected {n0}x{out_dim}",
                m.shape()
            )))
        }
        Some(m) => m.clone(),
        None => Mat::zeros(n0, out_dim),
    };
    for (i, block) in params.head.iter().enumerate().rev() {
        dh = block.edge_backward(&trace.head[i], &dh, &mut acc.head[i]);
    }
    let dec_last = *params.arch.decoder_widths.last().unwrap();
    let (mut d_cur, _d_ri) = dh.hsplit(dec_last);

    let mut d_enc: Vec<Mat> = (0..l_count)
        .map(|l| Mat::zeros(s.coords[l].len(), params.arch.encoder_widths[l]))
        .collect();
    for step in (0..l_count).rev() {
        let level = l_count - 1 - step;
        if let Some(lg) = level_grad(l_count + step, s.coords[level].len(), params.arch.decoder_widths[step])? {
            d_cur.add_assign(lg);
        }
        let dz = params.decoder[step].backward(&trace.decoder[step], &d_cur, &mut acc.decoder[step]);
        let up_cols = dz.cols() - params.arch.encoder_widths[level];
        let (d_up, d_skip) = dz.hsplit(up_cols);
        d_enc[level].add_assign(&d_skip);
        d_cur = s.interps[level].backward(&d_up);
    }

    // d_cur is now the gradient at the deepest pooled features
    let mut d_pooled = d_cur;
    for l in (0..l_count).rev() {
        let width = params.arch.encoder_widths[l];
        if let Some(lg) = level_grad(l, s.coords[l + 1].len(), width)? {
            d_pooled.add_assign(lg);
        }
        for (r, &src) in s.fps[l].iter().enumerate() {
            for (t, v) in d_enc[l].row_mut(src).iter_mut().zip(d_pooled.row(r)) {
                *t += v;
            }
        }
        let d_in = params.encoder[l].edge_backward(&trace.encoder[l], &d_enc[l], &mut acc.encoder[l]);
        d_pooled = d_in;
    }
    Ok(())
}
