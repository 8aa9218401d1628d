//! Whole-criterion checks shared by the topical test files and the
//! acceptance target. Each returns a one-line summary alongside its verdict.

use cgd::consensus::{oracle_register, ConsensusConfig, CorrespondenceMatrix};
use cgd::distances::{chamfer, cgd, CgdParams, FilterParams};
use cgd::embedder::{
    backward, embed, ri_features, Architecture, EmbedderParams, Level, LevelEmbeddings, OutputGrads,
};
use cgd::geometry::{dist2, fps, kabsch, knn, rotation_rmse, Point3, PointCloud};
use cgd::harness::{generate_shape, make_eval_pair, AugmentSpec, ShapeKind};
use cgd::losses::{contrastive, repulsion_layer, repulsion_total, similarity, LossConfig};
use cgd::mat::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

/// All other indices ordered by (distance, index), first `k` kept.
pub fn brute_knn(points: &[Point3], k: usize) -> Vec<Vec<usize>> {
    (0..points.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..points.len())
                .filter(|&j| j != i)
                .map(|j| (dist2(&points[i], &points[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Greedy farthest point selection recomputing every min-distance from
/// scratch.
pub fn brute_fps(points: &[Point3], m: usize, start: usize) -> Vec<usize> {
    let mut picked = vec![start];
    while picked.len() < m {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..points.len() {
            if picked.contains(&i) {
                continue;
            }
            let d = picked
                .iter()
                .map(|&s| dist2(&points[i], &points[s]))
                .fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, i);
            }
        }
        picked.push(best.1);
    }
    picked
}

/// Continuous coordinates for odd seeds, a coarse integer lattice (many
/// exact ties and duplicates) for even ones.
pub fn oracle_cloud(rng: &mut impl Rng, n: usize, lattice: bool) -> PointCloud {
    if lattice {
        let mut c = || rng.random_range(0..3) as f64;
        PointCloud::new((0..n).map(|_| Point3::new(c(), c(), c())).collect()).unwrap()
    } else {
        random_cloud(rng, n)
    }
}

pub fn geometric_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut knn_bad = 0;
    let mut fps_bad = 0;
    for t in 0..1000 {
        let n = rng.random_range(4..=64);
        let cloud = oracle_cloud(&mut rng, n, t % 2 == 0);
        let k = rng.random_range(1..n);
        let g = knn(&cloud, k).unwrap();
        let expect = brute_knn(cloud.points(), k);
        if (0..n).any(|i| g.row(i) != expect[i].as_slice()) {
            knn_bad += 1;
        }
        let m = rng.random_range(1..=n);
        let start = rng.random_range(0..n);
        if fps(&cloud, m, start).unwrap() != brute_fps(cloud.points(), m, start) {
            fps_bad += 1;
        }
    }
    let mut worst_r: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(3..=50);
        let src = random_cloud(&mut rng, n);
        let t = random_transform(&mut rng);
        let dst = t.apply(&src);
        let est = kabsch(src.points(), dst.points()).unwrap();
        worst_r = worst_r.max(rotation_rmse(&est, &t));
        worst_t = worst_t.max((est.translation() - t.translation()).norm());
    }
    Verdict {
        pass: knn_bad == 0 && fps_bad == 0 && worst_r < 1e-6 && worst_t < 1e-9,
        detail: format!(
            "knn mismatches {knn_bad}/1000, fps mismatches {fps_bad}/1000, kabsch worst RMSE(R) {worst_r:.2e}°, worst |Δt| {worst_t:.2e}"
        ),
    }
}

pub fn metric_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2000);
    let mut worst: f64 = 0.0;
    let mut self_worst: f64 = 0.0;
    for _ in 0..100 {
        let nx = rng.random_range(1..=64);
        let ny = rng.random_range(1..=64);
        let x = random_cloud(&mut rng, nx);
        let y = random_cloud(&mut rng, ny);
        let p = CorrespondenceMatrix::from_mat(random_mat(&mut rng, nx, ny)).unwrap();
        let f = FilterParams::new(rng.random_range(0.05..1.0), 2.0).unwrap();
        let c = chamfer(&x, &y, &f);
        let g = cgd(&x, &y, &p, &CgdParams { gamma: 0.0 }, &f).unwrap();
        worst = worst.max((c - g).abs());
        self_worst = self_worst.max(chamfer(&x, &x, &f).abs());
    }
    Verdict {
        pass: worst <= 1e-12 && self_worst == 0.0,
        detail: format!("max |cgd(γ=0) − chamfer| {worst:.2e}, max chamfer(x, x) {self_worst:.1e}"),
    }
}

/// Sign of every pairwise cosine: the only branch points of the losses.
pub fn cosine_signs(a: &Mat, b: &Mat) -> Vec<u32> {
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = Vec::with_capacity(a.rows() * b.rows());
    for ra in a.row_iter() {
        for rb in b.row_iter() {
            let c = ra.iter().zip(rb).map(|(x, y)| x * y).sum::<f64>() / (norm(ra) * norm(rb));
            out.push(u32::from(c > 0.0));
        }
    }
    out
}

fn loss_instance(rng: &mut ChaCha8Rng) -> (PointCloud, Mat, usize) {
    let n = rng.random_range(4..=32);
    let d = rng.random_range(2..=8);
    (random_cloud(rng, n), random_mat(rng, n, d), d)
}

/// Every loss, with respect to its embedding inputs, on random instances.
pub fn loss_gradients(instances: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(3000);
    let mut total = GradCheck::empty();
    for _ in 0..instances {
        let cfg = LossConfig {
            beta: [1.0, 2.0, 3.0][rng.random_range(0..3)],
            ..LossConfig::default()
        };
        let (cloud, h, d) = loss_instance(&mut rng);
        let n = cloud.len();
        let pts = cloud.points().to_vec();
        let graph = knn(&cloud, rng.random_range(1..n.min(6))).unwrap();

        let (_, g) = repulsion_layer(&pts, &h, cfg.beta).unwrap();
        let mut x = h.as_slice().to_vec();
        total.merge(check_entries(&mut x, 0..n * d, g.as_slice(), 1e-8, |v| {
            let m = Mat::from_vec(n, d, v.to_vec()).unwrap();
            (repulsion_layer(&pts, &m, cfg.beta).unwrap().0, cosine_signs(&m, &m))
        }));

        let (_, g) = similarity(&pts, &h, &graph, &cfg).unwrap();
        let mut x = h.as_slice().to_vec();
        total.merge(check_entries(&mut x, 0..n * d, g.as_slice(), 1e-8, |v| {
            let m = Mat::from_vec(n, d, v.to_vec()).unwrap();
            (similarity(&pts, &m, &graph, &cfg).unwrap().0, cosine_signs(&m, &m))
        }));

        let hy = random_mat(&mut rng, n, d);
        let (_, gx, gy) = contrastive(&h, &hy, &graph).unwrap();
        let mut both = h.as_slice().to_vec();
        both.extend_from_slice(hy.as_slice());
        let mut analytic = gx.as_slice().to_vec();
        analytic.extend_from_slice(gy.as_slice());
        total.merge(check_entries(&mut both, 0..2 * n * d, &analytic, 1e-8, |v| {
            let a = Mat::from_vec(n, d, v[..n * d].to_vec()).unwrap();
            let b = Mat::from_vec(n, d, v[n * d..].to_vec()).unwrap();
            (contrastive(&a, &b, &graph).unwrap().0, Vec::new())
        }));

        // Level-weighted repulsion over two synthetic levels.
        let m2 = rng.random_range(2..n.max(3));
        let h2 = random_mat(&mut rng, m2, d);
        let levels = LevelEmbeddings {
            levels: vec![
                Level {
                    points: pts.clone(),
                    features: h.clone(),
                    fps_indices: None,
                },
                Level {
                    points: pts[..m2].to_vec(),
                    features: h2.clone(),
                    fps_indices: None,
                },
            ],
            embedding: h.clone(),
        };
        let (_, lg) = repulsion_total(&levels, &cfg).unwrap();
        let mut x = h2.as_slice().to_vec();
        total.merge(check_entries(&mut x, 0..m2 * d, lg[1].as_slice(), 1e-8, |v| {
            let mut lv = levels.clone();
            lv.levels[1].features = Mat::from_vec(m2, d, v.to_vec()).unwrap();
            let signs = cosine_signs(&lv.levels[1].features, &lv.levels[1].features);
            (repulsion_total(&lv, &cfg).unwrap().0, signs)
        }));
    }
    total
}

/// Composed network, every parameter, under a random linear probe of all
/// outputs, plus the squared-norm loss of the final embedding.
pub fn network_gradients(seeds: &[u64]) -> GradCheck {
    let mut total = GradCheck::empty();
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = tiny_arch();
        let cloud = random_cloud(&mut rng, 16);
        let ri = ri_features(&cloud, arch.k).unwrap();
        let params = EmbedderParams::init(&arch, seed).unwrap();
        let (out, trace) = embed(&params, &cloud, &ri).unwrap();
        let weights: Vec<Mat> = out
            .levels
            .iter()
            .map(|l| random_mat(&mut rng, l.features.rows(), l.features.cols()))
            .collect();
        let w_emb = random_mat(&mut rng, out.embedding.rows(), out.embedding.cols());
        let dot = |a: &Mat, b: &Mat| a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum::<f64>();
        let probe = |o: &LevelEmbeddings| {
            dot(&w_emb, &o.embedding) + weights.iter().zip(&o.levels).map(|(w, l)| dot(w, &l.features)).sum::<f64>()
        };
        let grads = OutputGrads {
            embedding: Some(w_emb.clone()),
            levels: weights.iter().cloned().map(Some).collect(),
        };
        let sq = OutputGrads {
            embedding: Some({
                let mut g = out.embedding.clone();
                g.scale(2.0);
                g
            }),
            levels: vec![None; out.levels.len()],
        };
        let mut scratch = params.clone();
        for (g, value) in [
            (grads, &probe as &dyn Fn(&LevelEmbeddings) -> f64),
            (sq, &|o: &LevelEmbeddings| o.embedding.sum_sq()),
        ] {
            let analytic = flat_params(&backward(&params, &trace, &g).unwrap());
            let mut x = flat_params(&params);
            let n = x.len();
            total.merge(check_entries(&mut x, 0..n, &analytic, 1e-7, |flat| {
                set_flat(&mut scratch, flat);
                let (o, t) = trace.replay_traced(&scratch).unwrap();
                (value(&o), t.branch_pattern())
            }));
        }
    }
    total
}

pub fn gradient_verdict(losses: &GradCheck, network: &GradCheck) -> Verdict {
    let mut all = GradCheck::empty();
    for part in [losses, network] {
        all.probed += part.probed;
        all.straddling += part.straddling;
        all.boundary_failed += part.boundary_failed;
        all.failed.extend(part.failed.iter().copied());
    }
    Verdict {
        pass: all.failed.is_empty() && all.smooth_pass_rate() >= 0.99,
        detail: format!("losses: {}; network: {}", losses.summary(), network.summary()),
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn invariance(transforms: usize) -> Verdict {
    let arch = Architecture::default();
    let params = EmbedderParams::init(&arch, 7).unwrap();
    let cloud = generate_shape(ShapeKind::Blob, 128, 3).unwrap();
    let ri = ri_features(&cloud, arch.k).unwrap();
    let (base, _) = embed(&params, &cloud, &ri).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let mut ri_worst: f64 = 0.0;
    let mut cos_worst: f64 = 1.0;
    for _ in 0..transforms {
        let t = random_transform(&mut rng);
        let moved = t.apply(&cloud);
        let ri_m = ri_features(&moved, arch.k).unwrap();
        for (a, b) in ri.features.as_slice().iter().zip(ri_m.features.as_slice()) {
            ri_worst = ri_worst.max((a - b).abs());
        }
        let (out, _) = embed(&params, &moved, &ri_m).unwrap();
        for i in 0..cloud.len() {
            cos_worst = cos_worst.min(cosine(base.embedding.row(i), out.embedding.row(i)));
        }
    }
    Verdict {
        pass: ri_worst <= 1e-9 && cos_worst >= 1.0 - 1e-6,
        detail: format!("{transforms} transforms: max RI deviation {ri_worst:.2e}, min embedding cosine 1 − {:.2e}", 1.0 - cos_worst),
    }
}

pub fn oracle_consensus(pairs: usize) -> Verdict {
    let cfg = ConsensusConfig::default();
    let spec = AugmentSpec::default();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut min_shared = usize::MAX;
    for i in 0..pairs {
        let kind = ShapeKind::ALL[i % 4];
        let shape = generate_shape(kind, 256, 5000 + i as u64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + i as u64);
        let pair = make_eval_pair(&shape, &spec, &mut rng).unwrap();
        min_shared = min_shared.min(pair.shared().len());
        let c = ConsensusConfig { seed: i as u64, ..cfg };
        match oracle_register(&pair.x, &pair.y, &c) {
            Ok(r) => worst = worst.max(rotation_rmse(&r.transform, &pair.t_gt)),
            Err(_) => failures += 1,
        }
    }
    Verdict {
        pass: failures == 0 && worst < 1e-4,
        detail: format!("{pairs} partial pairs (min overlap {min_shared} points): worst RMSE(R) {worst:.2e}°, failures {failures}"),
    }
}
