//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The page holds one [`Demo`], which owns the current pair and network and
//! answers three requests: make a pair, register it, and sweep the two
//! consensus scores around the ground truth. Everything crosses the boundary
//! as JSON strings.

use cgd::consensus::{
    embed_correspondence, register_with_correspondence, ConsensusConfig, CorrespondenceMatrix, SamplingMode,
    ScoreMetric,
};
use cgd::distances::{max_sampling_distance, CgdParams, DistanceScorer, FilterParams};
use cgd::embedder::{read_checkpoint, Architecture, EmbedderParams};
use cgd::geometry::{rotation_rmse, translation_rmse, PointCloud, RigidTransform};
use cgd::harness::{generate_shape, make_eval_pair, AugmentSpec, RegistrationPair, ShapeKind};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize)]
struct PairView<'a> {
    source: Vec<[f64; 3]>,
    target: Vec<[f64; 3]>,
    shared: usize,
    t_gt: &'a RigidTransform,
}

#[derive(Serialize)]
struct RegisterView {
    transform: RigidTransform,
    rmse_r: f64,
    rmse_t: f64,
    candidates: usize,
    best_score: f64,
    aligned: Vec<[f64; 3]>,
    /// Sampling probability per source point.
    confidence: Vec<f64>,
}

#[derive(Serialize)]
struct Landscape {
    angles_deg: Vec<f64>,
    cgd: Vec<f64>,
    chamfer: Vec<f64>,
}

fn coords(c: &PointCloud) -> Vec<[f64; 3]> {
    c.points().iter().map(|p| [p.x, p.y, p.z]).collect()
}

/// Demo state: one pair, one network, and the correspondence between them.
#[wasm_bindgen]
pub struct Demo {
    params: EmbedderParams,
    pair: Option<RegistrationPair>,
    p: Option<CorrespondenceMatrix>,
    oracle: bool,
}

impl Default for Demo {
    fn default() -> Self {
        Self::new()
    }
}

#[wasm_bindgen]
impl Demo {
    /// Starts with an untrained network.
    #[wasm_bindgen(constructor)]
    pub fn new() -> Demo {
        let params = EmbedderParams::init(&Architecture::default(), 0).expect("default architecture is valid");
        Demo {
            params,
            pair: None,
            p: None,
            oracle: false,
        }
    }

    /// Replaces the network with a checkpoint produced by `cgd train`.
    #[wasm_bindgen(js_name = loadCheckpoint)]
    pub fn load_checkpoint(&mut self, bytes: &[u8]) -> Result<String, JsError> {
        self.params = read_checkpoint(bytes).map_err(js_err)?;
        self.p = None;
        Ok(format!("{} parameters", self.params.num_params()))
    }

    /// Use the id-derived ground-truth correspondence instead of the network.
    #[wasm_bindgen(js_name = setOracle)]
    pub fn set_oracle(&mut self, on: bool) {
        if on != self.oracle {
            self.oracle = on;
            self.p = None;
        }
    }

    /// Builds a fresh evaluation pair; returns both clouds and the ground truth.
    #[wasm_bindgen(js_name = synthPair)]
    pub fn synth_pair(
        &mut self,
        kind: &str,
        points: usize,
        seed: u64,
        rot_max_deg: f64,
        keep_fraction: f64,
        noise_sigma: f64,
    ) -> Result<String, JsError> {
        let kind: ShapeKind = kind.parse().map_err(js_err)?;
        let shape = generate_shape(kind, points, seed).map_err(js_err)?;
        let spec = AugmentSpec {
            rot_max_deg,
            keep_fraction,
            noise_sigma,
            ..AugmentSpec::default()
        };
        spec.validate().map_err(js_err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let pair = make_eval_pair(&shape, &spec, &mut rng).map_err(js_err)?;
        let view = PairView {
            source: coords(&pair.x),
            target: coords(&pair.y),
            shared: pair.shared().len(),
            t_gt: &pair.t_gt,
        };
        let json = serde_json::to_string(&view).map_err(js_err)?;
        self.pair = Some(pair);
        self.p = None;
        Ok(json)
    }

    fn correspondence(&mut self) -> Result<(&RegistrationPair, &CorrespondenceMatrix), JsError> {
        let pair = self.pair.as_ref().ok_or_else(|| JsError::new("no pair yet"))?;
        if self.p.is_none() {
            let p = if self.oracle {
                CorrespondenceMatrix::from_ids(&pair.x, &pair.y)
            } else {
                embed_correspondence(&pair.x, &pair.y, &self.params)
            };
            self.p = Some(p.map_err(js_err)?);
        }
        Ok((pair, self.p.as_ref().unwrap()))
    }

    /// Runs the consensus on the current pair.
    pub fn register(&mut self, gamma: f64, chamfer: bool, uniform: bool, seed: u64) -> Result<String, JsError> {
        let cfg = ConsensusConfig {
            gamma: CgdParams { gamma },
            metric: if chamfer { ScoreMetric::Chamfer } else { ScoreMetric::Cgd },
            sampling: if uniform { SamplingMode::Uniform } else { SamplingMode::Confidence },
            seed,
            workers: 1,
            ..ConsensusConfig::default()
        };
        let (pair, p) = self.correspondence()?;
        let reg = register_with_correspondence(&pair.x, &pair.y, p, &cfg).map_err(js_err)?;
        let view = RegisterView {
            rmse_r: rotation_rmse(&reg.transform, &pair.t_gt),
            rmse_t: translation_rmse(&reg.transform, &pair.t_gt),
            candidates: reg.experiments.candidates.len(),
            best_score: reg.diagnostics.best_score,
            aligned: coords(&reg.transform.apply(&pair.x)),
            confidence: reg.confidence.s.clone(),
            transform: reg.transform,
        };
        serde_json::to_string(&view).map_err(js_err)
    }

    /// Both consensus scores of the ground truth perturbed by a rotation of
    /// each angle about `axis` (0, 1 or 2) through the target centroid.
    pub fn landscape(&mut self, gamma: f64, axis: usize, max_deg: f64, steps: usize) -> Result<String, JsError> {
        if axis > 2 || steps < 2 || !(max_deg > 0.0) {
            return Err(JsError::new("axis must be 0..2, steps >= 2, max_deg > 0"));
        }
        let (pair, p) = self.correspondence()?;
        let d_s = max_sampling_distance(&pair.x, &pair.y).map_err(js_err)?;
        let filter = FilterParams::new(d_s, ConsensusConfig::default().cutoff_multiplier).map_err(js_err)?;
        let scorer = DistanceScorer::new(&pair.y, filter);
        let centre = pair.y.centroid();
        let mut dir = Vector3::zeros();
        dir[axis] = 1.0;
        let mut out = Landscape {
            angles_deg: Vec::with_capacity(steps),
            cgd: Vec::with_capacity(steps),
            chamfer: Vec::with_capacity(steps),
        };
        for s in 0..steps {
            let a = -max_deg + 2.0 * max_deg * s as f64 / (steps - 1) as f64;
            let spin = RigidTransform::from_translation(centre)
                .compose(&RigidTransform::from_axis_angle_deg(&dir, a))
                .compose(&RigidTransform::from_translation(-centre));
            let tx = spin.compose(&pair.t_gt).apply(&pair.x);
            out.angles_deg.push(a);
            out.chamfer.push(scorer.chamfer(&tx));
            out.cgd.push(scorer.cgd(&tx, p, &CgdParams { gamma }).map_err(js_err)?);
        }
        serde_json::to_string(&out).map_err(js_err)
    }
}
