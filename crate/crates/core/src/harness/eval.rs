use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Config;
use super::icp::icp;
use super::pairs::{make_eval_pair, AugmentSpec, RegistrationPair};
use super::shapes::generate_shape;
use super::stream_seed;
use crate::consensus::{
    embed_correspondence, register_with_correspondence, ConsensusConfig, CorrespondenceMatrix, SamplingMode,
    ScoreMetric,
};
use crate::embedder::{load_checkpoint, EmbedderParams};
use crate::error::{invalid, Result};
use crate::geometry::{euler_xyz_deg, wrap_deg, RigidTransform};

const EVAL_SHAPES: u64 = 11;
const EVAL_PAIRS: u64 = 12;
const EVAL_CONSENSUS: u64 = 13;

pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Confidence-guided sampling, CGD consensus.
    Cgd,
    /// Uniform sampling, CGD consensus.
    Ransac,
    /// Confidence-guided sampling, Chamfer consensus.
    Chamfer,
    Icp,
    /// CGD consensus on the ground-truth correspondence.
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cgd => "cgd",
            Self::Ransac => "ransac",
            Self::Chamfer => "chamfer",
            Self::Icp => "icp",
            Self::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    /// Per-axis Euler residuals, degrees.
    pub euler_err_deg: [f64; 3],
    pub rmse_r: f64,
    pub rmse_t: f64,
    /// The method produced no transform; the identity was scored instead.
    pub failed: bool,
}

impl PairResult {
    pub fn score(pred: &RigidTransform, gt: &RigidTransform, failed: bool) -> Self {
        let rel = gt.rotation().transpose() * pred.rotation();
        let e = euler_xyz_deg(&rel).map(wrap_deg);
        let dt = pred.translation() - gt.translation();
        Self {
            euler_err_deg: e,
            rmse_r: ((e[0] * e[0] + e[1] * e[1] + e[2] * e[2]) / 3.0).sqrt(),
            rmse_t: (dt.norm_squared() / 3.0).sqrt(),
            failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    /// RMSE over all pairs' residuals.
    pub rmse_r: f64,
    pub rmse_t: f64,
    /// Mean of the per-pair values.
    pub mean_rmse_r: f64,
    pub mean_rmse_t: f64,
    pub median_rmse_r: f64,
    pub failures: usize,
    pub pairs: Vec<PairResult>,
}

impl MethodReport {
    fn from_pairs(method: Method, pairs: Vec<PairResult>) -> Self {
        let n = pairs.len().max(1) as f64;
        let rmse_r = (pairs.iter().map(|p| p.rmse_r * p.rmse_r).sum::<f64>() / n).sqrt();
        let rmse_t = (pairs.iter().map(|p| p.rmse_t * p.rmse_t).sum::<f64>() / n).sqrt();
        let mut sorted: Vec<f64> = pairs.iter().map(|p| p.rmse_r).collect();
        sorted.sort_by(f64::total_cmp);
        let median_rmse_r = match sorted.len() {
            0 => 0.0,
            l if l % 2 == 1 => sorted[l / 2],
            l => 0.5 * (sorted[l / 2 - 1] + sorted[l / 2]),
        };
        Self {
            method,
            rmse_r,
            rmse_t,
            mean_rmse_r: pairs.iter().map(|p| p.rmse_r).sum::<f64>() / n,
            mean_rmse_t: pairs.iter().map(|p| p.rmse_t).sum::<f64>() / n,
            median_rmse_r,
            failures: pairs.iter().filter(|p| p.failed).count(),
            pairs,
        }
    }
}

/// Deterministic evaluation summary. Wall-clock figures live in
/// [`EvalTimings`] so that reruns compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub pairs: usize,
    pub points: usize,
    pub noise_sigma: f64,
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalTimings {
    pub total_s: f64,
    /// Mean seconds per pair for each method; the embedding time is
    /// reported separately under `embed`.
    pub mean_s: BTreeMap<String, f64>,
}

/// Held-out evaluation pairs.
pub fn eval_pairs(cfg: &Config) -> Result<Vec<RegistrationPair>> {
    let spec = AugmentSpec {
        noise_sigma: cfg.eval.noise_sigma,
        ..cfg.augment
    };
    (0..cfg.eval.pairs)
        .map(|i| {
            let kind = cfg.train.kinds[i % cfg.train.kinds.len()];
            let shape = generate_shape(kind, cfg.eval.points, stream_seed(cfg.seed, EVAL_SHAPES, i as u64))?;
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, EVAL_PAIRS, i as u64));
            make_eval_pair(&shape, &spec, &mut rng)
        })
        .collect()
}

fn methods(cfg: &Config) -> Vec<Method> {
    let mut m = vec![Method::Cgd, Method::Ransac, Method::Chamfer, Method::Icp];
    if cfg.eval.oracle {
        m.push(Method::Oracle);
    }
    m
}

fn consensus_for(method: Method, base: &ConsensusConfig, seed: u64) -> ConsensusConfig {
    let (metric, sampling) = match method {
        Method::Ransac => (ScoreMetric::Cgd, SamplingMode::Uniform),
        Method::Chamfer => (ScoreMetric::Chamfer, SamplingMode::Confidence),
        _ => (ScoreMetric::Cgd, SamplingMode::Confidence),
    };
    ConsensusConfig {
        metric,
        sampling,
        seed,
        ..*base
    }
}

fn run_pair(
    cfg: &Config,
    params: &EmbedderParams,
    index: usize,
    pair: &RegistrationPair,
    methods: &[Method],
) -> Result<(Vec<PairResult>, Vec<f64>, f64)> {
    let seed = stream_seed(cfg.seed, EVAL_CONSENSUS, index as u64);
    let t0 = Instant::now();
    let p = embed_correspondence(&pair.x, &pair.y, params)?;
    let embed_s = t0.elapsed().as_secs_f64();
    let mut results = Vec::with_capacity(methods.len());
    let mut secs = Vec::with_capacity(methods.len());
    for &m in methods {
        let t = Instant::now();
        let pred = match m {
            Method::Icp => icp(&pair.x, &pair.y, cfg.eval.icp_max_iters, cfg.eval.icp_tol),
            Method::Oracle => CorrespondenceMatrix::from_ids(&pair.x, &pair.y).and_then(|oracle| {
                register_with_correspondence(&pair.x, &pair.y, &oracle, &consensus_for(m, &cfg.consensus, seed))
                    .map(|r| r.transform)
            }),
            _ => register_with_correspondence(&pair.x, &pair.y, &p, &consensus_for(m, &cfg.consensus, seed))
                .map(|r| r.transform),
        };
        secs.push(t.elapsed().as_secs_f64());
        results.push(match pred {
            Ok(t) => PairResult::score(&t, &pair.t_gt, false),
            Err(_) => PairResult::score(&RigidTransform::identity(), &pair.t_gt, true),
        });
    }
    Ok((results, secs, embed_s))
}

/// Runs every method over the seeded evaluation set.
pub fn evaluate(cfg: &Config, params: &EmbedderParams) -> Result<(EvalReport, EvalTimings)> {
    cfg.validate()?;
    if params.arch != cfg.arch {
        return Err(invalid("checkpoint architecture differs from the configuration"));
    }
    let start = Instant::now();
    let pairs = eval_pairs(cfg)?;
    let methods = methods(cfg);
    let run = |(i, pair): (usize, &RegistrationPair)| run_pair(cfg, params, i, pair, &methods);
    let per_pair: Vec<_> = if cfg.eval.workers <= 1 {
        pairs.iter().enumerate().map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.eval.workers)
            .build()
            .map_err(|e| invalid(e.to_string()))?;
        pool.install(|| pairs.par_iter().enumerate().map(run).collect::<Result<_>>())?
    };
    let n = per_pair.len().max(1) as f64;
    let mut timings = EvalTimings::default();
    let mut reports = Vec::with_capacity(methods.len());
    for (k, &m) in methods.iter().enumerate() {
        let rows = per_pair.iter().map(|(r, _, _)| r[k]).collect();
        reports.push(MethodReport::from_pairs(m, rows));
        let mean = per_pair.iter().map(|(_, s, _)| s[k]).sum::<f64>() / n;
        timings.mean_s.insert(m.name().to_string(), mean);
    }
    timings
        .mean_s
        .insert("embed".into(), per_pair.iter().map(|(_, _, e)| e).sum::<f64>() / n);
    timings.total_s = start.elapsed().as_secs_f64();
    Ok((
        EvalReport {
            seed: cfg.seed,
            pairs: pairs.len(),
            points: cfg.eval.points,
            noise_sigma: cfg.eval.noise_sigma,
            methods: reports,
        },
        timings,
    ))
}

/// As [`evaluate`], loading the network from `checkpoint`.
pub fn evaluate_checkpoint(cfg: &Config, checkpoint: &Path) -> Result<(EvalReport, EvalTimings)> {
    let params = load_checkpoint(checkpoint)?;
    evaluate(cfg, &params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_is_rmse_over_pairs() {
        let a = PairResult::score(&RigidTransform::rot_z_deg(3.0), &RigidTransform::identity(), false);
        let b = PairResult::score(&RigidTransform::rot_z_deg(4.0), &RigidTransform::identity(), false);
        let r = MethodReport::from_pairs(Method::Cgd, vec![a, b]);
        let expect = ((9.0 / 3.0 + 16.0 / 3.0) / 2.0f64).sqrt();
        assert!((r.rmse_r - expect).abs() < 1e-9);
        assert!((r.mean_rmse_r - (a.rmse_r + b.rmse_r) / 2.0).abs() < 1e-12);
        assert_eq!(r.median_rmse_r, r.mean_rmse_r);
    }
}
