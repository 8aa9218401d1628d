#![allow(dead_code)]

pub mod suites;

use cgd::embedder::{Architecture, EmbedderParams};
use cgd::geometry::{Point3, PointCloud, RigidTransform};
use cgd::mat::Mat;
use nalgebra::Vector3;
use rand::Rng;

pub fn random_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

pub fn random_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_transform(rng: &mut impl Rng) -> RigidTransform {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let axis = if axis.norm() < 1e-6 { Vector3::z() } else { axis.normalize() };
    RigidTransform::from_axis_angle_deg(&axis, rng.random_range(-180.0..180.0)).with_translation(Vector3::new(
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
    ))
}

pub fn tiny_arch() -> Architecture {
    Architecture {
        k: 4,
        pool_factors: vec![0.5, 0.25],
        encoder_widths: vec![6, 8],
        decoder_widths: vec![7, 6],
        head_widths: vec![6, 6, 8],
    }
}

pub const FD_STEP: f64 = 1e-4;
pub const FD_RTOL: f64 = 1e-3;

/// Relative disagreement between an analytic and a numeric derivative.
/// Both below `floor` in magnitude counts as agreement.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < floor {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

pub struct GradCheck {
    pub probed: usize,
    /// Probes whose finite-difference stencil crosses a branch boundary
    /// (a rectifier side, a max winner or a clamp switches inside it).
    pub straddling: usize,
    /// Failures inside a smooth region: real disagreements.
    pub failed: Vec<(usize, f64, f64)>,
    /// Failures whose stencil straddles a boundary.
    pub boundary_failed: usize,
}

impl GradCheck {
    /// Share of probes that agree, ignoring boundary-straddling ones.
    pub fn smooth_pass_rate(&self) -> f64 {
        let smooth = self.probed - self.straddling;
        if smooth == 0 {
            return 1.0;
        }
        1.0 - self.failed.len() as f64 / smooth as f64
    }

    /// Share of all probes that agree.
    pub fn raw_pass_rate(&self) -> f64 {
        1.0 - (self.failed.len() + self.boundary_failed) as f64 / self.probed.max(1) as f64
    }

    pub fn merge(&mut self, other: GradCheck) {
        self.probed += other.probed;
        self.straddling += other.straddling;
        self.failed.extend(other.failed);
        self.boundary_failed += other.boundary_failed;
    }

    pub fn empty() -> Self {
        Self {
            probed: 0,
            straddling: 0,
            failed: Vec::new(),
            boundary_failed: 0,
        }
    }

    pub fn summary(&self) -> String {
        format!(
            "{} probes, {} straddle a boundary, {} boundary failures, {} smooth failures, raw pass {:.2}%, smooth pass {:.2}%",
            self.probed,
            self.straddling,
            self.boundary_failed,
            self.failed.len(),
            100.0 * self.raw_pass_rate(),
            100.0 * self.smooth_pass_rate()
        )
    }
}

/// Probes the entries `indices` of `x`. `f` returns the function value and
/// its branch pattern at the given point.
pub fn check_entries(
    x: &mut [f64],
    indices: impl IntoIterator<Item = usize>,
    analytic: &[f64],
    floor: f64,
    mut f: impl FnMut(&[f64]) -> (f64, Vec<u32>),
) -> GradCheck {
    let (_, base) = f(x);
    let mut out = GradCheck::empty();
    for i in indices {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let (up, pu) = f(x);
        x[i] = orig - FD_STEP;
        let (down, pd) = f(x);
        x[i] = orig;
        let num = (up - down) / (2.0 * FD_STEP);
        let straddles = pu != base || pd != base;
        out.probed += 1;
        out.straddling += usize::from(straddles);
        if rel_err(analytic[i], num, floor) > FD_RTOL {
            if straddles {
                out.boundary_failed += 1;
            } else {
                out.failed.push((i, analytic[i], num));
            }
        }
    }
    out
}

/// Flat views of every parameter tensor, in a fixed order.
pub fn flat_params(p: &EmbedderParams) -> Vec<f64> {
    p.tensors().into_iter().flat_map(|t| t.iter().copied()).collect()
}

pub fn set_flat(p: &mut EmbedderParams, flat: &[f64]) {
    let mut off = 0;
    for t in p.tensors_mut() {
        let n = t.len();
        t.copy_from_slice(&flat[off..off + n]);
        off += n;
    }
}
