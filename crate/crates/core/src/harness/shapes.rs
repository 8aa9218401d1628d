//! Parametric, globally asymmetric shape families.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Point3, PointCloud};

pub const MIN_SHAPE_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Torus,
    BentPrism,
    Blob,
    Stair,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [Self::Torus, Self::BentPrism, Self::Blob, Self::Stair];

    pub fn name(self) -> &'static str {
        match self {
            Self::Torus => "torus",
            Self::BentPrism => "bent-prism",
            Self::Blob => "blob",
            Self::Stair => "stair",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown shape kind {s:?}")))
    }
}

/// Torus whose tube radius varies around the ring so that no rotation maps
/// it onto itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusShape {
    pub ring_radius: f64,
    pub tube_radius: f64,
    pub a1: f64,
    pub a2: f64,
}

impl TorusShape {
    fn random(rng: &mut impl Rng) -> Self {
        Self {
            ring_radius: 1.0,
            tube_radius: rng.random_range(0.3..0.4),
            a1: rng.random_range(0.3..0.45),
            a2: rng.random_range(0.15..0.3),
        }
    }

    /// Tube radius at ring angle `u`.
    pub fn tube_at(&self, u: f64) -> f64 {
        self.tube_radius * (1.0 + self.a1 * u.cos() + self.a2 * (2.0 * u).sin())
    }

    pub fn point(&self, u: f64, v: f64) -> Point3 {
        let r = self.tube_at(u);
        let rho = self.ring_radius + r * v.cos();
        Point3::new(rho * u.cos(), rho * u.sin(), r * v.sin())
    }

    /// Signed residual of the implicit surface equation, zero on the surface.
    pub fn residual(&self, p: &Point3) -> f64 {
        let u = p.y.atan2(p.x);
        let rho = (p.x * p.x + p.y * p.y).sqrt();
        ((rho - self.ring_radius).powi(2) + p.z * p.z).sqrt() - self.tube_at(u)
    }
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let mut a = 0.0;
    for i in 0..poly.len() {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % poly.len()];
        a += x0 * y1 - x1 * y0;
    }
    0.5 * a.abs()
}

fn inside(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut c = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let [xi, yi] = poly[i];
        let [xj, yj] = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            c = !c;
        }
        j = i;
    }
    c
}

/// Uniform surface sample of a polygon extruded along z over `[0, depth]`.
fn sample_prism(poly: &[[f64; 2]], depth: f64, rng: &mut impl Rng) -> Point3 {
    let cap = polygon_area(poly);
    let edges: Vec<f64> = (0..poly.len())
        .map(|i| {
            let [x0, y0] = poly[i];
            let [x1, y1] = poly[(i + 1) % poly.len()];
            ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt() * depth
        })
        .collect();
    let side: f64 = edges.iter().sum();
    let mut t = rng.random::<f64>() * (2.0 * cap + side);
    if t < 2.0 * cap {
        let z = if t < cap { 0.0 } else { depth };
        let (lo_x, hi_x) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p[0]), a.1.max(p[0])));
        let (lo_y, hi_y) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p[1]), a.1.max(p[1])));
        loop {
            let x = rng.random_range(lo_x..hi_x);
            let y = rng.random_range(lo_y..hi_y);
            if inside(poly, x, y) {
                return Point3::new(x, y, z);
            }
        }
    }
    t -= 2.0 * cap;
    let mut e = 0;
    while e + 1 < edges.len() && t >= edges[e] {
        t -= edges[e];
        e += 1;
    }
    let [x0, y0] = poly[e];
    let [x1, y1] = poly[(e + 1) % poly.len()];
    let s = rng.random::<f64>();
    Point3::new(x0 + s * (x1 - x0), y0 + s * (y1 - y0), rng.random::<f64>() * depth)
}

fn jitter(rng: &mut impl Rng, v: f64) -> f64 {
    v * rng.random_range(0.85..1.15)
}

fn l_polygon(rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let w = jitter(rng, 2.0);
    let h = jitter(rng, 1.5);
    let arm = jitter(rng, 0.6);
    let leg = jitter(rng, 0.7);
    vec![[0.0, 0.0], [w, 0.0], [w, arm], [leg, arm], [leg, h], [0.0, h]]
}

fn stair_polygon(rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let mut poly = vec![[0.0, 0.0]];
    let widths = [jitter(rng, 0.9), jitter(rng, 0.6), jitter(rng, 0.4)];
    let heights = [jitter(rng, 0.3), jitter(rng, 0.5), jitter(rng, 0.8)];
    let total_w: f64 = widths.iter().sum();
    poly.push([total_w, 0.0]);
    let mut x = total_w;
    let mut y = 0.0;
    for (w, h) in widths.iter().rev().zip(heights.iter().rev()) {
        y += h;
        poly.push([x, y]);
        x -= w;
        poly.push([x, y]);
    }
    poly
}

fn sample_blob(coef: &[f64; 6], rng: &mut impl Rng) -> Point3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..TAU);
    let s = (1.0 - z * z).sqrt();
    let dir = Point3::new(s * phi.cos(), s * phi.sin(), z);
    let theta = z.acos();
    let r = 1.0
        + coef[0] * (2.0 * theta).sin() * phi.cos()
        + coef[1] * (3.0 * theta).cos()
        + coef[2] * theta.sin() * (2.0 * phi + coef[5]).sin()
        + coef[3] * dir.x.max(0.0).powi(2)
        + coef[4] * (theta.cos() * phi.sin());
    dir * r
}

/// Raw sampler output before normalisation, plus the torus parameters when
/// the kind is a torus.
pub fn sample_shape_raw(kind: ShapeKind, n: usize, seed: u64) -> Result<(Vec<Point3>, Option<TorusShape>)> {
    if n < MIN_SHAPE_POINTS {
        return Err(invalid(format!("shapes need at least {MIN_SHAPE_POINTS} points, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5348_4150_45u64);
    Ok(match kind {
        ShapeKind::Torus => {
            let t = TorusShape::random(&mut rng);
            let pts = (0..n)
                .map(|_| t.point(rng.random_range(-PI..PI), rng.random_range(-PI..PI)))
                .collect();
            (pts, Some(t))
        }
        ShapeKind::BentPrism => {
            let poly = l_polygon(&mut rng);
            let depth = jitter(&mut rng, 0.8);
            let bend = rng.random_range(0.4..0.6);
            let pts = (0..n)
                .map(|_| {
                    let mut p = sample_prism(&poly, depth, &mut rng);
                    p.x += bend * p.z * p.z;
                    p
                })
                .collect();
            (pts, None)
        }
        ShapeKind::Stair => {
            let poly = stair_polygon(&mut rng);
            let depth = jitter(&mut rng, 0.7);
            (
                (0..n).map(|_| sample_prism(&poly, depth, &mut rng)).collect(),
                None,
            )
        }
        ShapeKind::Blob => {
            let coef = [
                rng.random_range(0.2..0.35),
                rng.random_range(0.1..0.2),
                rng.random_range(0.1..0.2),
                rng.random_range(0.3..0.5),
                rng.random_range(0.05..0.15),
                rng.random_range(0.0..TAU),
            ];
            ((0..n).map(|_| sample_blob(&coef, &mut rng)).collect(), None)
        }
    })
}

/// Moves the centroid to the origin and scales the farthest point to radius 1.
pub fn normalize(points: &[Point3]) -> Result<Vec<Point3>> {
    let c = points.iter().fold(Point3::zeros(), |a, p| a + p) / points.len() as f64;
    let centered: Vec<Point3> = points.iter().map(|p| p - c).collect();
    let r = centered.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if !(r > 0.0) {
        return Err(Error::DegenerateGeometry("all points coincide".into()));
    }
    Ok(centered.into_iter().map(|p| p / r).collect())
}

/// `n` surface samples of a shape of the given family, centred with unit
/// radius. Ids are the sample indices.
pub fn generate_shape(kind: ShapeKind, n: usize, seed: u64) -> Result<PointCloud> {
    let (raw, _) = sample_shape_raw(kind, n, seed)?;
    PointCloud::with_ids(normalize(&raw)?, (0..n as u32).collect())
}
