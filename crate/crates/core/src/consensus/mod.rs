//! Inference: soft correspondence from embeddings, a confidence-weighted
//! sampling distribution over source points, minimal-sample experiments
//! solved in closed form, and selection of the candidate with the lowest
//! confidence guided distance.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::{max_sampling_distance, CgdParams, DistanceScorer, FilterParams};
use crate::embedder::{embed, ri_features, EmbedderParams};
use crate::error::{invalid, Error, Result};
use crate::geometry::{kabsch, PointCloud, RigidTransform};
use crate::mat::{normalize_rows, Mat};

/// Column sums below this (after the shift to `[0, 1]`) carry no mass.
pub const COLUMN_SUM_FLOOR: f64 = 1e-9;

/// Soft alignment between a source (rows) and a target (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMatrix {
    p: Mat,
}

impl CorrespondenceMatrix {
    pub fn from_mat(p: Mat) -> Result<Self> {
        if p.rows() == 0 || p.cols() == 0 {
            return Err(invalid("correspondence matrix must be non-empty"));
        }
        if p.as_slice().iter().any(|v| !(v.abs() <= 1.0 + 1e-12)) {
            return Err(invalid("correspondence entries must lie in [-1, 1]"));
        }
        Ok(Self { p })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_mat(Mat::from_vec(rows, cols, data)?)
    }

    /// Ground-truth map from stable ids: `1` where the ids agree, `-1`
    /// everywhere else.
    pub fn from_ids(x: &PointCloud, y: &PointCloud) -> Result<Self> {
        let (Some(xi), Some(yi)) = (x.ids(), y.ids()) else {
            return Err(invalid("oracle correspondence needs ids on both clouds"));
        };
        let lookup: std::collections::HashMap<u32, usize> =
            yi.iter().enumerate().map(|(j, &id)| (id, j)).collect();
        let mut p = Mat::filled(xi.len(), yi.len(), -1.0);
        for (i, id) in xi.iter().enumerate() {
            if let Some(&j) = lookup.get(id) {
                p[(i, j)] = 1.0;
            }
        }
        Self::from_mat(p)
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.p.shape()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[(i, j)]
    }

    pub fn as_mat(&self) -> &Mat {
        &self.p
    }

    /// Most similar target index for source row `i`, ties to the lower index.
    pub fn argmax_row(&self, i: usize) -> usize {
        let mut best = 0;
        let row = self.p.row(i);
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        best
    }

    /// Same matrix with the target columns reordered so that new column `j`
    /// is old column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        let (rows, cols) = self.shape();
        if perm.len() != cols {
            return Err(invalid("permutation length differs from column count"));
        }
        let mut p = Mat::zeros(rows, cols);
        for i in 0..rows {
            for (j, &src) in perm.iter().enumerate() {
                p[(i, j)] = self.p[(i, src)];
            }
        }
        Ok(Self { p })
    }
}

/// Cosine similarity of every source/target embedding pair.
pub fn soft_correspondence(h_x: &Mat, h_y: &Mat) -> Result<CorrespondenceMatrix> {
    if h_x.cols() != h_y.cols() {
        return Err(invalid(format!(
            "embedding widths differ: {} vs {}",
            h_x.cols(),
            h_y.cols()
        )));
    }
    let (ux, _) = normalize_rows(h_x)?;
    let (uy, _) = normalize_rows(h_y)?;
    let mut p = ux.matmul_t(&uy);
    for v in p.as_mut_slice() {
        *v = v.clamp(-1.0, 1.0);
    }
    CorrespondenceMatrix::from_mat(p)
}

/// Per-source confidence `c` and the sampling pmf `s` derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceDistribution {
    pub c: Vec<f64>,
    pub s: Vec<f64>,
}

impl ConfidenceDistribution {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("uniform distribution over zero points"));
        }
        Ok(Self {
            c: vec![1.0; n],
            s: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Number of indices with positive mass.
    pub fn support(&self) -> usize {
        self.s.iter().filter(|&&v| v > 0.0).count()
    }

    /// `count` independent categorical draws.
    pub fn draw(&self, count: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        let dist = self.sampler()?;
        Ok((0..count).map(|_| dist.sample(rng)).collect())
    }

    fn sampler(&self) -> Result<WeightedIndex<f64>> {
        WeightedIndex::new(&self.s)
            .map_err(|e| Error::DegenerateSampling(format!("invalid pmf: {e}")))
    }
}

/// Shift `P` to `[0, 1]`, normalise every column to unit mass, take the
/// row-wise maximum as the confidence and normalise those into a pmf.
///
/// Columns whose shifted sum is below [`COLUMN_SUM_FLOOR`] carry no mass and
/// are left out; the call fails only when every column is like that or no
/// row ends with positive confidence.
pub fn confidence(p: &CorrespondenceMatrix) -> Result<ConfidenceDistribution> {
    let (rows, cols) = p.shape();
    let m = p.as_mat();
    let mut col_sum = vec![0.0; cols];
    for i in 0..rows {
        for (s, v) in col_sum.iter_mut().zip(m.row(i)) {
            *s += (v + 1.0) * 0.5;
        }
    }
    let inv: Vec<Option<f64>> = col_sum
        .iter()
        .map(|&s| (s.abs() >= COLUMN_SUM_FLOOR).then(|| 1.0 / s))
        .collect();
    if inv.iter().all(Option::is_none) {
        return Err(Error::DegenerateConfidence(
            "every column of the correspondence matrix sums to zero".into(),
        ));
    }
    let c: Vec<f64> = (0..rows)
        .map(|i| {
            m.row(i)
                .iter()
                .zip(&inv)
                .filter_map(|(v, w)| w.map(|w| (v + 1.0) * 0.5 * w))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let total: f64 = c.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateConfidence("no source point has positive confidence".into()));
    }
    let s = c.iter().map(|v| v.max(0.0) / total).collect();
    Ok(ConfidenceDistribution { c, s })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMetric {
    Cgd,
    /// Ablation: plain filtered Chamfer, ignoring the correspondence.
    Chamfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Confidence,
    /// RANSAC baseline.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub q_fraction: f64,
    /// Points per experiment.
    pub r: usize,
    pub gamma: CgdParams,
    /// Outlier cutoff in units of the sampling distance.
    pub cutoff_multiplier: f64,
    pub seed: u64,
    /// Threads for candidate scoring; 0 or 1 scores sequentially.
    pub workers: usize,
    pub metric: ScoreMetric,
    pub sampling: SamplingMode,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            q_fraction: 0.1,
            r: 3,
            gamma: CgdParams::default(),
            cutoff_multiplier: FilterParams::DEFAULT_CUTOFF_MULTIPLIER,
            seed: 0,
            workers: 1,
            metric: ScoreMetric::Cgd,
            sampling: SamplingMode::Confidence,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_fraction > 0.0 && self.q_fraction <= 1.0) {
            return Err(invalid(format!("q_fraction must lie in (0, 1], got {}", self.q_fraction)));
        }
        if self.r < 3 {
            return Err(invalid(format!("experiment size r must be >= 3, got {}", self.r)));
        }
        if !(self.gamma.gamma >= 0.0) || !self.gamma.gamma.is_finite() {
            return Err(invalid("gamma must be finite and >= 0"));
        }
        if !(self.cutoff_multiplier > 0.0) {
            return Err(invalid("cutoff multiplier must be positive"));
        }
        Ok(())
    }

    /// Total draws for a source of `n` points.
    pub fn draws(&self, n: usize) -> usize {
        (self.q_fraction * n as f64).ceil() as usize
    }

    /// Number of experiments for a source of `n` points.
    pub fn experiments(&self, n: usize) -> usize {
        self.draws(n) / self.r
    }
}

/// Draws `Q` indices from `dist` and splits them into `⌊Q/r⌋` groups of `r`
/// distinct indices. Repeats inside a group are redrawn; the `Q mod r`
/// leftover draws are taken and discarded.
pub fn sample_experiments(
    dist: &ConfidenceDistribution,
    cfg: &ConsensusConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let n = dist.len();
    let q = cfg.draws(n);
    let r = cfg.r;
    if q < r {
        return Err(invalid(format!("Q = {q} draws cannot fill one group of r = {r}")));
    }
    if dist.support() < r {
        return Err(Error::DegenerateSampling(format!(
            "only {} points carry mass, need {r} distinct",
            dist.support()
        )));
    }
    let sampler = dist.sampler()?;
    let v = q / r;
    let mut groups = Vec::with_capacity(v);
    for _ in 0..v {
        let mut group = Vec::with_capacity(r);
        let mut attempts = 0;
        while group.len() < r {
            if attempts == 100 * r {
                return Err(Error::DegenerateSampling(format!(
                    "could not draw {r} distinct indices in {attempts} attempts"
                )));
            }
            attempts += 1;
            let idx = sampler.sample(rng);
            if !group.contains(&idx) {
                group.push(idx);
            }
        }
        groups.push(group);
    }
    for _ in 0..q % r {
        sampler.sample(rng);
    }
    Ok(groups)
}

/// Pairs each sampled source point with its most similar target point and
/// solves for the rigid motion.
pub fn solve_experiment(
    group: &[usize],
    p: &CorrespondenceMatrix,
    x: &PointCloud,
    y: &PointCloud,
) -> Result<RigidTransform> {
    if group.len() < 3 {
        return Err(invalid(format!("experiment needs >= 3 points, got {}", group.len())));
    }
    if p.shape() != (x.len(), y.len()) {
        return Err(invalid("correspondence matrix does not match the clouds"));
    }
    let src: Vec<_> = group.iter().map(|&i| *x.point(i)).collect();
    let dst: Vec<_> = group.iter().map(|&i| *y.point(p.argmax_row(i))).collect();
    kabsch(&src, &dst)
}

/// Candidate transforms with their scores and the selected one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSet {
    /// Every sampled group, including those whose solve was degenerate.
    pub groups: Vec<Vec<usize>>,
    pub candidates: Vec<RigidTransform>,
    /// `candidate_groups[v]` indexes `groups` for candidate `v`.
    pub candidate_groups: Vec<usize>,
    pub scores: Vec<f64>,
    /// Index into `candidates` of the lowest score.
    pub best: usize,
}

impl ExperimentSet {
    pub fn best_transform(&self) -> &RigidTransform {
        &self.candidates[self.best]
    }
}

fn score_all(
    candidates: &[RigidTransform],
    x: &PointCloud,
    scorer: &DistanceScorer<'_>,
    p: &CorrespondenceMatrix,
    cfg: &ConsensusConfig,
) -> Result<Vec<f64>> {
    let score = |t: &RigidTransform| -> Result<f64> {
        let tx = t.apply(x);
        match cfg.metric {
            ScoreMetric::Cgd => scorer.cgd(&tx, p, &cfg.gamma),
            ScoreMetric::Chamfer => Ok(scorer.chamfer(&tx)),
        }
    };
    if cfg.workers <= 1 {
        return candidates.iter().map(score).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| invalid(format!("cannot start {} workers: {e}", cfg.workers)))?;
    // indexed collect keeps candidate order, so the argmin is unaffected
    pool.install(|| candidates.par_iter().map(score).collect())
}

/// Scores every candidate and picks the lowest, ties to the lower index.
pub fn select_best(
    candidates: Vec<RigidTransform>,
    x: &PointCloud,
    y: &PointCloud,
    p: &CorrespondenceMatrix,
    cfg: &ConsensusConfig,
) -> Result<ExperimentSet> {
    if candidates.is_empty() {
        return Err(Error::NoConsensus(0));
    }
    let d_s = max_sampling_distance(x, y)?;
    let filter = FilterParams::new(d_s, cfg.cutoff_multiplier)?;
    let scorer = DistanceScorer::new(y, filter);
    let scores = score_all(&candidates, x, &scorer, p, cfg)?;
    let mut best = 0;
    for (v, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = v;
        }
    }
    let candidate_groups = (0..candidates.len()).collect();
    Ok(ExperimentSet {
        groups: Vec::new(),
        candidates,
        candidate_groups,
        scores,
        best,
    })
}

/// Summary of a consensus run, written next to the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub source_points: usize,
    pub target_points: usize,
    pub draws: usize,
    pub experiments: usize,
    pub degenerate: usize,
    pub sampling_distance: f64,
    pub metric: ScoreMetric,
    pub sampling: SamplingMode,
    pub best: usize,
    pub best_score: f64,
    pub scores: Vec<f64>,
    pub groups: Vec<Vec<usize>>,
    pub confidence_histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn of(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bins = bins.max(1);
        let mut counts = vec![0; bins];
        let width = hi - lo;
        for &v in values {
            let b = if width > 0.0 {
                (((v - lo) / width) * bins as f64) as usize
            } else {
                0
            };
            counts[b.min(bins - 1)] += 1;
        }
        Self { lo, hi, counts }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub transform: RigidTransform,
    pub experiments: ExperimentSet,
    pub confidence: ConfidenceDistribution,
    pub diagnostics: Diagnostics,
}

/// Consensus stage for a given correspondence matrix: sample, solve, score,
/// select. Deterministic given the inputs and `cfg.seed`.
pub fn register_with_correspondence(
    x: &PointCloud,
    y: &PointCloud,
    p: &CorrespondenceMatrix,
    cfg: &ConsensusConfig,
) -> Result<Registration> {
    cfg.validate()?;
    if p.shape() != (x.len(), y.len()) {
        return Err(invalid(format!(
            "correspondence matrix is {:?}, clouds are {}x{}",
            p.shape(),
            x.len(),
            y.len()
        )));
    }
    let dist = match cfg.sampling {
        SamplingMode::Confidence => confidence(p)?,
        SamplingMode::Uniform => ConfidenceDistribution::uniform(x.len())?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let groups = sample_experiments(&dist, cfg, &mut rng)?;
    let mut candidates = Vec::with_capacity(groups.len());
    let mut candidate_groups = Vec::with_capacity(groups.len());
    for (g, group) in groups.iter().enumerate() {
        match solve_experiment(group, p, x, y) {
            Ok(t) => {
                candidates.push(t);
                candidate_groups.push(g);
            }
            Err(Error::DegenerateGeometry(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if candidates.is_empty() {
        return Err(Error::NoConsensus(groups.len()));
    }
    let mut set = select_best(candidates, x, y, p, cfg)?;
    set.candidate_groups = candidate_groups;
    set.groups = groups;
    let diagnostics = Diagnostics {
        source_points: x.len(),
        target_points: y.len(),
        draws: cfg.draws(x.len()),
        experiments: set.groups.len(),
        degenerate: set.groups.len() - set.candidates.len(),
        sampling_distance: max_sampling_distance(x, y)?,
        metric: cfg.metric,
        sampling: cfg.sampling,
        best: set.best,
        best_score: set.scores[set.best],
        scores: set.scores.clone(),
        groups: set.candidate_groups.iter().map(|&g| set.groups[g].clone()).collect(),
        confidence_histogram: Histogram::of(&dist.s, 10),
    };
    Ok(Registration {
        transform: set.best_transform().clone(),
        experiments: set,
        confidence: dist,
        diagnostics,
    })
}

/// Latent-similarity matrix of two clouds under the given network.
pub fn embed_correspondence(
    x: &PointCloud,
    y: &PointCloud,
    params: &EmbedderParams,
) -> Result<CorrespondenceMatrix> {
    let k = params.arch.k;
    let (ex, _) = embed(params, x, &ri_features(x, k)?)?;
    let (ey, _) = embed(params, y, &ri_features(y, k)?)?;
    soft_correspondence(&ex.embedding, &ey.embedding)
}

/// Full pipeline: embed both clouds, build the correspondence and run the
/// confidence-guided consensus.
pub fn register(
    x: &PointCloud,
    y: &PointCloud,
    params: &EmbedderParams,
    cfg: &ConsensusConfig,
) -> Result<Registration> {
    let p = embed_correspondence(x, y, params)?;
    register_with_correspondence(x, y, &p, cfg)
}

/// As [`register`] with uniform sampling over the source points.
pub fn ransac_register(
    x: &PointCloud,
    y: &PointCloud,
    params: &EmbedderParams,
    cfg: &ConsensusConfig,
) -> Result<Registration> {
    let cfg = ConsensusConfig {
        sampling: SamplingMode::Uniform,
        ..*cfg
    };
    register(x, y, params, &cfg)
}

/// Consensus with the ground-truth correspondence taken from point ids.
pub fn oracle_register(x: &PointCloud, y: &PointCloud, cfg: &ConsensusConfig) -> Result<Registration> {
    let p = CorrespondenceMatrix::from_ids(x, y)?;
    register_with_correspondence(x, y, &p, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn m(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(rows).unwrap()
    }

    #[test]
    fn soft_correspondence_examples() {
        let p = soft_correspondence(&m(&[&[1.0, 0.0], &[0.0, 1.0]]), &m(&[&[1.0, 0.0]])).unwrap();
        assert_eq!(p.as_mat(), &m(&[&[1.0], &[0.0]]));
        let eye = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(soft_correspondence(&eye, &eye).unwrap().as_mat(), &eye);
        let anti = soft_correspondence(&m(&[&[1.0, 2.0]]), &m(&[&[-2.0, -4.0]])).unwrap();
        assert!((anti.get(0, 0) + 1.0).abs() < 1e-15);
        assert!(soft_correspondence(&m(&[&[0.0, 0.0]]), &eye).is_err());
    }

    #[test]
    fn confidence_examples() {
        let eye = CorrespondenceMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let d = confidence(&eye).unwrap();
        assert_eq!(d.s, vec![0.5, 0.5]);
        // shifted: column sums 1.5, so c = 1 / 1.5
        assert!(d.c.iter().all(|c| (c - 2.0 / 3.0).abs() < 1e-12));

        let flat = CorrespondenceMatrix::from_vec(2, 2, vec![0.8, 0.2, 0.8, 0.2]).unwrap();
        let d = confidence(&flat).unwrap();
        assert!(d.c.iter().all(|c| (c - 0.5).abs() < 1e-12));
        assert_eq!(d.s, vec![0.5, 0.5]);

        let lone = CorrespondenceMatrix::from_vec(1, 3, vec![0.1, -0.4, 0.9]).unwrap();
        assert_eq!(confidence(&lone).unwrap().s, vec![1.0]);

        let dead = CorrespondenceMatrix::from_vec(2, 1, vec![-1.0, -1.0]).unwrap();
        assert!(matches!(confidence(&dead), Err(Error::DegenerateConfidence(_))));
    }

    #[test]
    fn oracle_confidence_ignores_unmatched_points() {
        let x = PointCloud::with_ids(vec![Vector3::zeros(), Vector3::x(), Vector3::y()], vec![1, 2, 3]).unwrap();
        let y = PointCloud::with_ids(vec![Vector3::zeros(), Vector3::x(), Vector3::z()], vec![2, 1, 9]).unwrap();
        let p = CorrespondenceMatrix::from_ids(&x, &y).unwrap();
        assert_eq!(p.argmax_row(0), 1);
        assert_eq!(p.argmax_row(1), 0);
        let d = confidence(&p).unwrap();
        assert_eq!(d.s, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn group_counts() {
        let dist = ConfidenceDistribution::uniform(90).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = ConsensusConfig::default();
        let g = sample_experiments(&dist, &cfg, &mut rng).unwrap();
        assert_eq!(g.len(), 3);
        let dist = ConfidenceDistribution::uniform(100).unwrap();
        let g = sample_experiments(&dist, &cfg, &mut rng).unwrap();
        assert_eq!(g.len(), 3);
        for group in &g {
            let mut s = group.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 3);
        }
    }

    #[test]
    fn one_hot_cannot_fill_a_group() {
        let mut s = vec![0.0; 40];
        s[7] = 1.0;
        let dist = ConfidenceDistribution { c: s.clone(), s };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = ConsensusConfig {
            q_fraction: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            sample_experiments(&dist, &cfg, &mut rng),
            Err(Error::DegenerateSampling(_))
        ));
    }

    #[test]
    fn too_few_draws() {
        let dist = ConfidenceDistribution::uniform(20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = ConsensusConfig::default();
        assert!(matches!(
            sample_experiments(&dist, &cfg, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn tetra() -> PointCloud {
        PointCloud::from_xyz(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ])
        .unwrap()
    }

    fn identity_p(n: usize) -> CorrespondenceMatrix {
        let mut p = Mat::filled(n, n, -1.0);
        for i in 0..n {
            p[(i, i)] = 1.0;
        }
        CorrespondenceMatrix::from_mat(p).unwrap()
    }

    #[test]
    fn solve_examples() {
        let x = tetra();
        let shift = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let y = shift.apply(&x);
        let t = solve_experiment(&[0, 1, 2], &identity_p(4), &x, &y).unwrap();
        assert!((t.translation() - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((t.rotation() - nalgebra::Matrix3::identity()).norm() < 1e-12);
        let same = solve_experiment(&[0, 1, 3], &identity_p(4), &x, &x).unwrap();
        assert!((same.rotation() - nalgebra::Matrix3::identity()).norm() < 1e-12);

        let line = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            solve_experiment(&[0, 1, 2], &identity_p(3), &line, &line),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn select_best_examples() {
        let x = tetra();
        let ones = CorrespondenceMatrix::from_mat(Mat::filled(4, 4, 1.0)).unwrap();
        let cfg = ConsensusConfig::default();
        let cands = vec![
            RigidTransform::identity(),
            RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0)),
        ];
        let set = select_best(cands, &x, &x, &ones, &cfg).unwrap();
        assert_eq!(set.best, 0);
        assert_eq!(set.scores[0], 0.0);
        assert!(set.scores[1] > 0.0);

        let far = vec![RigidTransform::from_translation(Vector3::new(0.3, 0.0, 0.0))];
        assert_eq!(select_best(far, &x, &x, &ones, &cfg).unwrap().best, 0);
        assert!(matches!(
            select_best(vec![], &x, &x, &ones, &cfg),
            Err(Error::NoConsensus(_))
        ));
    }

    #[test]
    fn histogram_counts_everything() {
        let h = Histogram::of(&[0.0, 0.5, 1.0, 1.0], 4);
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        assert_eq!(h.counts[3], 2);
        assert_eq!(Histogram::of(&[2.0, 2.0], 3).counts, vec![2, 0, 0]);
    }
}
