//! Flat `key = value` configuration.
//!
//! Blank lines and `#` comments are ignored; lists are comma separated.
//! Unknown and repeated keys are errors. [`Config::to_text`] writes every key
//! and parses back to the same configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pairs::AugmentSpec;
use super::shapes::ShapeKind;
use crate::consensus::{ConsensusConfig, SamplingMode, ScoreMetric};
use crate::embedder::Architecture;
use crate::error::{Error, Result};
use crate::losses::LossConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    /// Number of distinct training shapes; one pair per shape per epoch.
    pub shapes: usize,
    pub points: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    /// Pairs whose gradients are summed before each update.
    pub accumulate: usize,
    /// Train on partial views (true) or on full shapes.
    pub partial: bool,
    /// Fixed pairs re-scored after every epoch.
    pub monitor_pairs: usize,
    pub kinds: Vec<ShapeKind>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 50,
            shapes: 200,
            points: 512,
            lr: 5e-4,
            lr_decay: 0.9,
            decay_every: 10,
            accumulate: 1,
            partial: true,
            monitor_pairs: 4,
            kinds: ShapeKind::ALL.to_vec(),
        }
    }
}

impl TrainSettings {
    /// Learning rate during epoch `e` (from 0).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.decay_every.max(1)) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub pairs: usize,
    pub points: usize,
    /// Noise added to both clouds of every evaluation pair.
    pub noise_sigma: f64,
    pub icp_max_iters: usize,
    pub icp_tol: f64,
    /// Adds a row for the consensus run on the ground-truth correspondence.
    pub oracle: bool,
    /// Pairs evaluated concurrently.
    pub workers: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            pairs: 50,
            points: 512,
            noise_sigma: 0.0,
            icp_max_iters: 50,
            icp_tol: 1e-6,
            oracle: true,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub seed: u64,
    pub arch: Architecture,
    pub loss: LossConfig,
    pub augment: AugmentSpec,
    pub consensus: ConsensusConfig,
    pub train: TrainSettings,
    pub eval: EvalSettings,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            arch: Architecture::default(),
            loss: LossConfig::default(),
            augment: AugmentSpec::default(),
            consensus: ConsensusConfig::default(),
            train: TrainSettings::default(),
            eval: EvalSettings::default(),
        }
    }
}

fn parse<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("bad value {v:?}: {e}"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("bad boolean {v:?}")),
    }
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',').map(|s| parse(s.trim())).collect()
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, path)
    }

    /// Parses `text`; `path` only labels error messages.
    pub fn parse_str(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Config::default();
        let mut seen = std::collections::HashSet::new();
        let err = |line: usize, msg: String| Error::Parse {
            path: PathBuf::from(path),
            line,
            msg,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(err(line, format!("expected `key = value`, got {content:?}")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(line, format!("duplicate key {key:?}")));
            }
            cfg.set(key, value).map_err(|m| err(line, m))?;
        }
        cfg.validate().map_err(|e| err(0, e.to_string()))?;
        Ok(cfg)
    }

    /// Sets a single key.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "seed" => self.seed = parse(v)?,
            "k" => self.arch.k = parse(v)?,
            "pool_factors" => self.arch.pool_factors = parse_list(v)?,
            "encoder_widths" => self.arch.encoder_widths = parse_list(v)?,
            "decoder_widths" => self.arch.decoder_widths = parse_list(v)?,
            "head_widths" => self.arch.head_widths = parse_list(v)?,
            "beta" => self.loss.beta = parse(v)?,
            "epsilon" => self.loss.epsilon = parse(v)?,
            "lambda_r" => self.loss.lambda_r = parse(v)?,
            "lambda_sim" => self.loss.lambda_sim = parse(v)?,
            "lambda_c" => self.loss.lambda_c = parse(v)?,
            "rot_max_deg" => self.augment.rot_max_deg = parse(v)?,
            "trans_range" => self.augment.trans_range = parse(v)?,
            "noise_sigma" => self.augment.noise_sigma = parse(v)?,
            "keep_fraction" => self.augment.keep_fraction = parse(v)?,
            "q_fraction" => self.consensus.q_fraction = parse(v)?,
            "r" => self.consensus.r = parse(v)?,
            "gamma" => self.consensus.gamma.gamma = parse(v)?,
            "cutoff_multiplier" => self.consensus.cutoff_multiplier = parse(v)?,
            "workers" => self.consensus.workers = parse(v)?,
            "metric" => {
                self.consensus.metric = match v {
                    "cgd" => ScoreMetric::Cgd,
                    "chamfer" => ScoreMetric::Chamfer,
                    _ => return Err(format!("metric must be cgd or chamfer, got {v:?}")),
                }
            }
            "sampling" => {
                self.consensus.sampling = match v {
                    "confidence" => SamplingMode::Confidence,
                    "uniform" => SamplingMode::Uniform,
                    _ => return Err(format!("sampling must be confidence or uniform, got {v:?}")),
                }
            }
            "epochs" => self.train.epochs = parse(v)?,
            "train_shapes" => self.train.shapes = parse(v)?,
            "train_points" => self.train.points = parse(v)?,
            "lr" => self.train.lr = parse(v)?,
            "lr_decay" => self.train.lr_decay = parse(v)?,
            "decay_every" => self.train.decay_every = parse(v)?,
            "accumulate" => self.train.accumulate = parse(v)?,
            "train_partial" => self.train.partial = parse_bool(v)?,
            "monitor_pairs" => self.train.monitor_pairs = parse(v)?,
            "shape_kinds" => self.train.kinds = parse_list(v)?,
            "eval_pairs" => self.eval.pairs = parse(v)?,
            "eval_points" => self.eval.points = parse(v)?,
            "eval_noise_sigma" => self.eval.noise_sigma = parse(v)?,
            "icp_max_iters" => self.eval.icp_max_iters = parse(v)?,
            "icp_tol" => self.eval.icp_tol = parse(v)?,
            "eval_oracle" => self.eval.oracle = parse_bool(v)?,
            "eval_workers" => self.eval.workers = parse(v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.loss.validate()?;
        self.augment.validate()?;
        self.consensus.validate()?;
        let bad = |m: &str| Err(crate::error::invalid(m));
        if self.train.epochs > 50 {
            return bad("epochs must not exceed 50");
        }
        if self.train.shapes == 0 || self.train.kinds.is_empty() {
            return bad("training needs at least one shape");
        }
        if self.train.accumulate == 0 || self.train.decay_every == 0 {
            return bad("accumulate and decay_every must be positive");
        }
        if !(self.train.lr > 0.0) || !(self.train.lr_decay > 0.0) {
            return bad("lr and lr_decay must be positive");
        }
        if !(self.eval.noise_sigma >= 0.0) || !(self.eval.icp_tol >= 0.0) {
            return bad("eval noise and icp tolerance must be >= 0");
        }
        Ok(())
    }

    /// Every key with its current value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kinds: Vec<&str> = self.train.kinds.iter().map(|k| k.name()).collect();
        let metric = match self.consensus.metric {
            ScoreMetric::Cgd => "cgd",
            ScoreMetric::Chamfer => "chamfer",
        };
        let sampling = match self.consensus.sampling {
            SamplingMode::Confidence => "confidence",
            SamplingMode::Uniform => "uniform",
        };
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("k", self.arch.k.to_string()),
            ("pool_factors", join(&self.arch.pool_factors)),
            ("encoder_widths", join(&self.arch.encoder_widths)),
            ("decoder_widths", join(&self.arch.decoder_widths)),
            ("head_widths", join(&self.arch.head_widths)),
            ("beta", self.loss.beta.to_string()),
            ("epsilon", self.loss.epsilon.to_string()),
            ("lambda_r", self.loss.lambda_r.to_string()),
            ("lambda_sim", self.loss.lambda_sim.to_string()),
            ("lambda_c", self.loss.lambda_c.to_string()),
            ("rot_max_deg", self.augment.rot_max_deg.to_string()),
            ("trans_range", self.augment.trans_range.to_string()),
            ("noise_sigma", self.augment.noise_sigma.to_string()),
            ("keep_fraction", self.augment.keep_fraction.to_string()),
            ("q_fraction", self.consensus.q_fraction.to_string()),
            ("r", self.consensus.r.to_string()),
            ("gamma", self.consensus.gamma.gamma.to_string()),
            ("cutoff_multiplier", self.consensus.cutoff_multiplier.to_string()),
            ("workers", self.consensus.workers.to_string()),
            ("metric", metric.to_string()),
            ("sampling", sampling.to_string()),
            ("epochs", self.train.epochs.to_string()),
            ("train_shapes", self.train.shapes.to_string()),
            ("train_points", self.train.points.to_string()),
            ("lr", self.train.lr.to_string()),
            ("lr_decay", self.train.lr_decay.to_string()),
            ("decay_every", self.train.decay_every.to_string()),
            ("accumulate", self.train.accumulate.to_string()),
            ("train_partial", self.train.partial.to_string()),
            ("monitor_pairs", self.train.monitor_pairs.to_string()),
            ("shape_kinds", kinds.join(",")),
            ("eval_pairs", self.eval.pairs.to_string()),
            ("eval_points", self.eval.points.to_string()),
            ("eval_noise_sigma", self.eval.noise_sigma.to_string()),
            ("icp_max_iters", self.eval.icp_max_iters.to_string()),
            ("icp_tol", self.eval.icp_tol.to_string()),
            ("eval_oracle", self.eval.oracle.to_string()),
            ("eval_workers", self.eval.workers.to_string()),
        ];
        for (k, v) in entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str) -> Result<Config> {
        Config::parse_str(text, Path::new("test.cfg"))
    }

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(p(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parses_values_and_comments() {
        let c = p("# comment\nepochs = 3 # inline\n\nshape_kinds = torus, blob\nmetric = chamfer\n").unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.kinds, vec![ShapeKind::Torus, ShapeKind::Blob]);
        assert_eq!(c.consensus.metric, ScoreMetric::Chamfer);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match p("epochs = 3\nbogus = 1\n") {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
        assert!(p("epochs = 3\nepochs = 4\n").is_err());
        assert!(p("epochs\n").is_err());
        assert!(p("epochs = many\n").is_err());
        assert!(p("epochs = 60\n").is_err());
    }

    #[test]
    fn lr_schedule() {
        let t = TrainSettings::default();
        assert_eq!(t.lr_at(0), 5e-4);
        assert_eq!(t.lr_at(9), 5e-4);
        assert!((t.lr_at(10) - 4.5e-4).abs() < 1e-18);
        assert!((t.lr_at(25) - 5e-4 * 0.81).abs() < 1e-18);
    }
}
