use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::Config;
use super::pairs::{make_training_pair, RegistrationPair};
use super::shapes::generate_shape;
use super::stream_seed;
use crate::embedder::{backward_into, embed, ri_features, save_checkpoint, EmbedderParams};
use crate::error::{Error, Result};
use crate::geometry::{knn, PointCloud};
use crate::losses::{pair_loss, LossBreakdown, PairSide};

pub const CHECKPOINT_FILE: &str = "checkpoint.cgdn";
pub const CURVE_FILE: &str = "training_curve.csv";

const TRAIN_SHAPES: u64 = 1;
const TRAIN_PAIRS: u64 = 2;
const MONITOR_PAIRS: u64 = 3;
const INIT: u64 = 4;
const SHUFFLE: u64 = 5;

/// Adaptive moment estimation over every parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    m: EmbedderParams,
    v: EmbedderParams,
    t: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(params: &EmbedderParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut EmbedderParams, grad: &EmbedderParams, lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let grads = grad.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Loss of one index-aligned pair, with gradients accumulated into `acc`
/// when given.
pub fn pair_objective(
    params: &EmbedderParams,
    pair: &RegistrationPair,
    cfg: &Config,
    acc: Option<&mut EmbedderParams>,
) -> Result<LossBreakdown> {
    let k = params.arch.k;
    let embed_one = |c: &PointCloud| -> Result<_> {
        let ri = ri_features(c, k)?;
        let (out, trace) = embed(params, c, &ri)?;
        Ok((out, trace, knn(c, k)?))
    };
    let (ox, tx, gx) = embed_one(&pair.x)?;
    let (oy, ty, gy) = embed_one(&pair.y)?;
    let sx = PairSide {
        points: pair.x.points(),
        out: &ox,
        graph: &gx,
    };
    let sy = PairSide {
        points: pair.y.points(),
        out: &oy,
        graph: &gy,
    };
    let (loss, dx, dy) = pair_loss(&sx, &sy, &cfg.loss)?;
    if let Some(acc) = acc {
        backward_into(params, &tx, &dx, acc)?;
        backward_into(params, &ty, &dy, acc)?;
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean over the epoch's training pairs.
    pub train: LossBreakdown,
    /// Mean over the fixed monitoring pairs after the epoch's updates.
    pub monitor: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EmbedderParams,
    pub curve: Vec<EpochStats>,
}

impl TrainOutcome {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_checkpoint(&self.params, dir.join(CHECKPOINT_FILE))?;
        write_curve(&self.curve, &dir.join(CURVE_FILE))
    }
}

pub fn write_curve(curve: &[EpochStats], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "epoch,lr,repulsion,similarity,contrastive,total,monitor_total"
    )?;
    for s in curve {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            s.epoch, s.lr, s.train.repulsion, s.train.similarity, s.train.contrastive, s.train.total, s.monitor.total
        )?;
    }
    f.flush()?;
    Ok(())
}

fn mean(items: &[LossBreakdown]) -> LossBreakdown {
    let n = items.len().max(1) as f64;
    let mut m = LossBreakdown::default();
    for b in items {
        m.repulsion += b.repulsion / n;
        m.similarity += b.similarity / n;
        m.contrastive += b.contrastive / n;
        m.total += b.total / n;
    }
    m
}

fn training_shapes(cfg: &Config) -> Result<Vec<PointCloud>> {
    (0..cfg.train.shapes)
        .map(|i| {
            let kind = cfg.train.kinds[i % cfg.train.kinds.len()];
            generate_shape(kind, cfg.train.points, stream_seed(cfg.seed, TRAIN_SHAPES, i as u64))
        })
        .collect()
}

fn dump_and_fail(dir: Option<&Path>, epoch: usize, index: usize, loss: &LossBreakdown) -> Error {
    let msg = format!("non-finite loss at epoch {epoch}, shape {index}: {loss:?}");
    if let Some(dir) = dir {
        let _ = std::fs::create_dir_all(dir);
        let dump = serde_json::json!({ "epoch": epoch, "shape": index, "loss": loss });
        let _ = std::fs::write(dir.join("nonfinite_dump.json"), dump.to_string());
    }
    Error::NonFinite(msg)
}

/// Trains from scratch. `on_epoch` sees each epoch's statistics as they
/// become available; `dump_dir` receives a diagnostic file if the loss turns
/// non-finite.
pub fn train_with(
    cfg: &Config,
    dump_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let shapes = training_shapes(cfg)?;
    let mut params = EmbedderParams::init(&cfg.arch, stream_seed(cfg.seed, INIT, 0))?;
    let mut adam = Adam::new(&params);
    let mut monitor = Vec::with_capacity(cfg.train.monitor_pairs);
    for i in 0..cfg.train.monitor_pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, MONITOR_PAIRS, i as u64));
        monitor.push(make_training_pair(&shapes[i % shapes.len()], &cfg.augment, cfg.train.partial, &mut rng)?);
    }
    let mut order: Vec<usize> = (0..shapes.len()).collect();
    let mut shuffle = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, SHUFFLE, 0));
    let mut curve = Vec::with_capacity(cfg.train.epochs);
    let mut grad = params.zeros_like();
    for epoch in 0..cfg.train.epochs {
        let lr = cfg.train.lr_at(epoch);
        order.shuffle(&mut shuffle);
        let mut losses = Vec::with_capacity(order.len());
        for (step, chunk) in order.chunks(cfg.train.accumulate).enumerate() {
            for t in grad.tensors_mut() {
                t.fill(0.0);
            }
            for &i in chunk {
                let pair_seed = stream_seed(cfg.seed, TRAIN_PAIRS, (epoch * shapes.len() + i) as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
                let pair = make_training_pair(&shapes[i], &cfg.augment, cfg.train.partial, &mut rng)?;
                let loss = pair_objective(&params, &pair, cfg, Some(&mut grad))?;
                if !loss.total.is_finite() {
                    return Err(dump_and_fail(dump_dir, epoch, i, &loss));
                }
                losses.push(loss);
            }
            if chunk.len() > 1 {
                let s = 1.0 / chunk.len() as f64;
                for t in grad.tensors_mut() {
                    t.iter_mut().for_each(|v| *v *= s);
                }
            }
            adam.step(&mut params, &grad, lr);
            if !params.is_finite() {
                return Err(dump_and_fail(dump_dir, epoch, step, losses.last().unwrap()));
            }
        }
        let monitored: Vec<LossBreakdown> = monitor
            .iter()
            .map(|p| pair_objective(&params, p, cfg, None))
            .collect::<Result<_>>()?;
        let stats = EpochStats {
            epoch,
            lr,
            train: mean(&losses),
            monitor: mean(&monitored),
        };
        on_epoch(&stats);
        curve.push(stats);
    }
    Ok(TrainOutcome { params, curve })
}

pub fn train(cfg: &Config) -> Result<TrainOutcome> {
    train_with(cfg, None, |_| {})
}
