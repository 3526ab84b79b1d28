//! Synthetic domains: the six whitened 2D point distributions and
//! document-like stroke patches with a Gaussian + speckle degradation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 2D benchmark domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    /// Two moons.
    TM,
    /// Checkerboard.
    CB,
    /// Concentric rings.
    CR,
    /// Concentric squares.
    CS,
    /// Parallel rings.
    PR,
    /// Parallel squares.
    PS,
}

impl Domain {
    pub const ALL: [Domain; 6] = [
        Domain::TM,
        Domain::CB,
        Domain::CR,
        Domain::CS,
        Domain::PR,
        Domain::PS,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::TM => "TM",
            Domain::CB => "CB",
            Domain::CR => "CR",
            Domain::CS => "CS",
            Domain::PR => "PR",
            Domain::PS => "PS",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TM" => Ok(Domain::TM),
            "CB" => Ok(Domain::CB),
            "CR" => Ok(Domain::CR),
            "CS" => Ok(Domain::CS),
            "PR" => Ok(Domain::PR),
            "PS" => Ok(Domain::PS),
            _ => Err(Error::config(format!("unknown dataset kind '{s}'"))),
        }
    }
}

/// Shape parameters for the point generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Radii of the concentric rings, also the half-sides of the concentric squares.
    pub radii: Vec<f64>,
    /// Isotropic Gaussian jitter added to every curve-based point.
    pub jitter: f64,
    /// Checkerboard cells per side.
    pub checker_cells: usize,
    /// Number of translated copies for the parallel shapes.
    pub parallel_count: usize,
    /// Radius (or half-side) of each parallel shape.
    pub parallel_radius: f64,
    /// Center-to-center distance along x for the parallel shapes.
    pub parallel_spacing: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            radii: vec![0.5, 1.0, 1.5],
            jitter: 0.05,
            checker_cells: 4,
            parallel_count: 3,
            parallel_radius: 1.0,
            parallel_spacing: 3.0,
        }
    }
}

impl GeneratorConfig {
    /// Number of distinct identity labels the generator assigns for `kind`.
    pub fn label_count(&self, kind: Domain) -> usize {
        match kind {
            Domain::TM => 2,
            Domain::CB => self.checker_cells * self.checker_cells / 2,
            Domain::CR | Domain::CS => self.radii.len(),
            Domain::PR | Domain::PS => self.parallel_count,
        }
    }

    fn validate(&self, kind: Domain) -> Result<()> {
        let ok = match kind {
            Domain::TM => true,
            Domain::CB => self.checker_cells >= 2,
            Domain::CR | Domain::CS => {
                !self.radii.is_empty() && self.radii.iter().all(|r| *r > 0.0 && r.is_finite())
            }
            Domain::PR | Domain::PS => self.parallel_count >= 1 && self.parallel_radius > 0.0,
        };
        if !ok || !(self.jitter >= 0.0) {
            return Err(Error::config(format!(
                "invalid generator config for {kind}"
            )));
        }
        Ok(())
    }
}

/// A labelled set of 2D points from one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<[f64; 2]>,
    /// Identity label per point, used to color cycle plots.
    pub labels: Vec<u32>,
    pub domain: Domain,
}

impl PointSet {
    pub fn new(points: Vec<[f64; 2]>, labels: Vec<u32>, domain: Domain) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::Shape {
                expected: vec![points.len()],
                found: vec![labels.len()],
            });
        }
        Ok(Self {
            points,
            labels,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points as an `n x 2` matrix.
    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.len(), 2), |(i, j)| self.points[i][j])
    }

    /// Replaces the coordinates, keeping labels and domain.
    pub fn with_points(&self, data: &Array2<f64>) -> Result<Self> {
        if data.dim() != (self.len(), 2) {
            return Err(Error::Shape {
                expected: vec![self.len(), 2],
                found: data.shape().to_vec(),
            });
        }
        let points = data.rows().into_iter().map(|r| [r[0], r[1]]).collect();
        PointSet::new(points, self.labels.clone(), self.domain)
    }

    pub fn mean(&self) -> [f64; 2] {
        moments(&self.points).0
    }

    /// Population covariance (divides by n).
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        moments(&self.points).1
    }
}

fn moments(points: &[[f64; 2]]) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = points.len() as f64;
    let mut mean = [0.0; 2];
    for p in points {
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= n;
    mean[1] /= n;
    let mut cov = [[0.0; 2]; 2];
    for p in points {
        let d = [p[0] - mean[0], p[1] - mean[1]];
        cov[0][0] += d[0] * d[0];
        cov[0][1] += d[0] * d[1];
        cov[1][1] += d[1] * d[1];
    }
    cov[0][0] /= n;
    cov[0][1] /= n;
    cov[1][1] /= n;
    cov[1][0] = cov[0][1];
    (mean, cov)
}

/// Affine map `y = L^-1 (x - mean)` where `L` is the Cholesky factor of the
/// covariance it was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineWhitener {
    pub mean: [f64; 2],
    /// Inverse Cholesky factor (lower triangular).
    pub transform: [[f64; 2]; 2],
}

impl AffineWhitener {
    /// Fits on the population moments of `points`.
    pub fn fit(points: &[[f64; 2]]) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::Numeric(format!(
                "whitening needs at least 3 points, got {}",
                points.len()
            )));
        }
        let (mean, cov) = moments(points);
        Self::from_moments(mean, cov)
    }

    pub fn from_moments(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        let tr = cov[0][0] + cov[1][1];
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        let (lmax, lmin) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
        if !(lmin > 1e-12 * lmax) || !lmax.is_finite() {
            let cond = if lmin > 0.0 {
                lmax / lmin
            } else {
                f64::INFINITY
            };
            return Err(Error::Numeric(format!(
                "singular covariance (condition number {cond:e})"
            )));
        }
        // L = [[a, 0], [b, c]]
        let a = cov[0][0].sqrt();
        let b = cov[1][0] / a;
        let c = (cov[1][1] - b * b).sqrt();
        let transform = [[1.0 / a, 0.0], [-b / (a * c), 1.0 / c]];
        Ok(Self { mean, transform })
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let d = [p[0] - self.mean[0], p[1] - self.mean[1]];
        let m = &self.transform;
        [
            m[0][0] * d[0] + m[0][1] * d[1],
            m[1][0] * d[0] + m[1][1] * d[1],
        ]
    }

    pub fn invert(&self, y: [f64; 2]) -> [f64; 2] {
        // transform is lower triangular: forward substitution
        let m = &self.transform;
        let d0 = y[0] / m[0][0];
        let d1 = (y[1] - m[1][0] * d0) / m[1][1];
        [d0 + self.mean[0], d1 + self.mean[1]]
    }
}

/// Whitens a point set on its own empirical moments.
pub fn whiten(raw: &PointSet) -> Result<(PointSet, AffineWhitener)> {
    let w = AffineWhitener::fit(&raw.points)?;
    let points = raw.points.iter().map(|p| w.apply(*p)).collect();
    Ok((PointSet::new(points, raw.labels.clone(), raw.domain)?, w))
}

/// `n` whitened points from `kind` with the default shape parameters.
pub fn make_dataset(kind: Domain, n: usize, seed: u64) -> Result<PointSet> {
    make_dataset_with(kind, n, seed, &GeneratorConfig::default())
}

/// Sets with fewer than this many points are whitened with the reference
/// whitener of their generator instead of their own moments.
const MIN_SELF_WHITEN: usize = 3;
const REFERENCE_SIZE: usize = 1 << 16;
const REFERENCE_SEED: u64 = 0x5eed_decd;

pub fn make_dataset_with(
    kind: Domain,
    n: usize,
    seed: u64,
    cfg: &GeneratorConfig,
) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::config("dataset size must be at least 1"));
    }
    let raw = sample_raw(kind, n, seed, cfg)?;
    if n >= MIN_SELF_WHITEN {
        if let Ok((white, _)) = whiten(&raw) {
            return Ok(white);
        }
    }
    let w = reference_whitener(kind, cfg)?;
    let points = raw.points.iter().map(|p| w.apply(*p)).collect();
    PointSet::new(points, raw.labels, kind)
}

/// Whitener fitted on a large fixed-seed draw, standing in for the
/// generator's population moments.
pub fn reference_whitener(kind: Domain, cfg: &GeneratorConfig) -> Result<AffineWhitener> {
    let reference = sample_raw(kind, REFERENCE_SIZE, REFERENCE_SEED, cfg)?;
    AffineWhitener::fit(&reference.points)
}

/// Un-whitened samples straight from the shape generator.
pub fn sample_raw(kind: Domain, n: usize, seed: u64, cfg: &GeneratorConfig) -> Result<PointSet> {
    cfg.validate(kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, cfg.jitter).map_err(|e| Error::config(e.to_string()))?;
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (p, label, jittered) = match kind {
            Domain::TM => two_moons(&mut rng),
            Domain::CB => checkerboard(&mut rng, cfg.checker_cells),
            Domain::CR => {
                let k = rng.random_range(0..cfg.radii.len());
                (
                    ring_point(&mut rng, [0.0, 0.0], cfg.radii[k]),
                    k as u32,
                    true,
                )
            }
            Domain::CS => {
                let k = rng.random_range(0..cfg.radii.len());
                (
                    square_point(&mut rng, [0.0, 0.0], cfg.radii[k]),
                    k as u32,
                    true,
                )
            }
            Domain::PR | Domain::PS => {
                let k = rng.random_range(0..cfg.parallel_count);
                let offset =
                    (k as f64 - (cfg.parallel_count as f64 - 1.0) / 2.0) * cfg.parallel_spacing;
                let p = if kind == Domain::PR {
                    ring_point(&mut rng, [offset, 0.0], cfg.parallel_radius)
                } else {
                    square_point(&mut rng, [offset, 0.0], cfg.parallel_radius)
                };
                (p, k as u32, true)
            }
        };
        let p = if jittered {
            [
                p[0] + jitter.sample(&mut rng),
                p[1] + jitter.sample(&mut rng),
            ]
        } else {
            p
        };
        points.push(p);
        labels.push(label);
    }
    PointSet::new(points, labels, kind)
}

fn two_moons(rng: &mut ChaCha8Rng) -> ([f64; 2], u32, bool) {
    let theta = rng.random::<f64>() * PI;
    if rng.random::<bool>() {
        ([theta.cos(), theta.sin()], 0, true)
    } else {
        ([1.0 - theta.cos(), 0.5 - theta.sin()], 1, true)
    }
}

/// Uniform over the "dark" cells of a board on `[-2, 2]^2`; the label is the
/// index of the dark cell.
fn checkerboard(rng: &mut ChaCha8Rng, cells: usize) -> ([f64; 2], u32, bool) {
    let dark = cells * cells / 2;
    let k = rng.random_range(0..dark);
    let row = k / (cells / 2).max(1);
    let slot = k % (cells / 2).max(1);
    let col = 2 * slot + (row % 2);
    let col = col.min(cells - 1);
    let size = 4.0 / cells as f64;
    let x = -2.0 + (col as f64 + rng.random::<f64>()) * size;
    let y = -2.0 + (row as f64 + rng.random::<f64>()) * size;
    ([x, y], k as u32, false)
}

fn ring_point(rng: &mut ChaCha8Rng, center: [f64; 2], radius: f64) -> [f64; 2] {
    let theta = rng.random::<f64>() * 2.0 * PI;
    [
        center[0] + radius * theta.cos(),
        center[1] + radius * theta.sin(),
    ]
}

/// Uniform along the perimeter of an axis-aligned square.
fn square_point(rng: &mut ChaCha8Rng, center: [f64; 2], half: f64) -> [f64; 2] {
    let s = rng.random::<f64>() * 4.0;
    let u = (s.fract() * 2.0 - 1.0) * half;
    let (x, y) = match s as usize {
        0 => (u, -half),
        1 => (half, u),
        2 => (-u, half),
        _ => (-half, -u),
    };
    [center[0] + x, center[1] + y]
}

/// A grayscale image with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayPatch {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl GrayPatch {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::Shape {
                expected: vec![height, width],
                found: vec![pixels.len()],
            });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.pixels[row * self.width + col] = v;
    }

    /// Maps `[0, 1]` intensities to the `[-1, 1]` range the models train on.
    pub fn to_model_space(&self) -> Vec<f64> {
        self.pixels.iter().map(|v| 2.0 * v - 1.0).collect()
    }

    /// Inverse of [`GrayPatch::to_model_space`], clamped back into `[0, 1]`.
    pub fn from_model_space(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        let pixels = values
            .iter()
            .map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0))
            .collect();
        GrayPatch::new(height, width, pixels)
    }

    pub fn clamped(mut self) -> Self {
        for p in &mut self.pixels {
            *p = p.clamp(0.0, 1.0);
        }
        self
    }

    /// Fraction of pixels below `threshold`.
    pub fn dark_fraction(&self, threshold: f64) -> f64 {
        let dark = self.pixels.iter().filter(|p| **p < threshold).count();
        dark as f64 / self.pixels.len() as f64
    }
}

/// Controls for [`render_strokes_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeConfig {
    /// Target fraction of dark pixels; strokes are added until it is reached.
    pub density: f64,
    pub min_strokes: usize,
    pub max_strokes: usize,
    /// Stroke width range in pixels.
    pub thickness: (f64, f64),
    /// Upper bound on ink intensity (0 is black).
    pub max_ink: f64,
}

impl StrokeConfig {
    pub fn with_density(density: f64) -> Self {
        Self {
            density,
            min_strokes: 0,
            max_strokes: 256,
            thickness: (1.0, 2.2),
            max_ink: 0.1,
        }
    }
}

pub fn render_strokes(seed: u64, h: usize, w: usize, density: f64) -> Result<GrayPatch> {
    render_strokes_with(seed, h, w, &StrokeConfig::with_density(density))
}

/// White page with dark random line and arc strokes.
pub fn render_strokes_with(seed: u64, h: usize, w: usize, cfg: &StrokeConfig) -> Result<GrayPatch> {
    if h < 8 || w < 8 {
        return Err(Error::config(format!(
            "stroke patch must be at least 8x8, got {h}x{w}"
        )));
    }
    if !(cfg.density > 0.0 && cfg.density < 1.0) {
        return Err(Error::config(format!(
            "stroke density must be in (0, 1), got {}",
            cfg.density
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = GrayPatch::filled(h, w, 1.0);
    let target = (cfg.density * (h * w) as f64).round() as usize;
    let mut strokes = 0;
    while strokes < cfg.max_strokes && (strokes < cfg.min_strokes || count_dark(&img) < target) {
        let stroke = Stroke::random(&mut rng, h, w, cfg);
        stroke.draw(&mut img);
        strokes += 1;
    }
    Ok(img)
}

fn count_dark(img: &GrayPatch) -> usize {
    img.pixels.iter().filter(|p| **p < 0.5).count()
}

enum Shape {
    Segment {
        a: [f64; 2],
        b: [f64; 2],
    },
    Arc {
        center: [f64; 2],
        radius: f64,
        start: f64,
        sweep: f64,
    },
}

struct Stroke {
    shape: Shape,
    thickness: f64,
    ink: f64,
}

impl Stroke {
    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize, cfg: &StrokeConfig) -> Self {
        let (hf, wf) = (h as f64, w as f64);
        let scale = hf.min(wf);
        let thickness = rng.random_range(cfg.thickness.0..=cfg.thickness.1);
        let ink = rng.random::<f64>() * cfg.max_ink;
        let shape = if rng.random::<f64>() < 0.6 {
            let a = [rng.random::<f64>() * hf, rng.random::<f64>() * wf];
            let len = scale * rng.random_range(0.15..0.5);
            let dir = rng.random::<f64>() * 2.0 * PI;
            Shape::Segment {
                a,
                b: [a[0] + len * dir.sin(), a[1] + len * dir.cos()],
            }
        } else {
            Shape::Arc {
                center: [rng.random::<f64>() * hf, rng.random::<f64>() * wf],
                radius: scale * rng.random_range(0.08..0.3),
                start: rng.random::<f64>() * 2.0 * PI,
                sweep: rng.random_range(0.5..1.6) * PI,
            }
        };
        Self {
            shape,
            thickness,
            ink,
        }
    }

    fn distance(&self, p: [f64; 2]) -> f64 {
        match self.shape {
            Shape::Segment { a, b } => {
                let ab = [b[0] - a[0], b[1] - a[1]];
                let ap = [p[0] - a[0], p[1] - a[1]];
                let len2 = ab[0] * ab[0] + ab[1] * ab[1];
                let s = if len2 > 0.0 {
                    ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let q = [a[0] + s * ab[0], a[1] + s * ab[1]];
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
            }
            Shape::Arc {
                center,
                radius,
                start,
                sweep,
            } => {
                let d = [p[0] - center[0], p[1] - center[1]];
                let angle = d[0].atan2(d[1]);
                let rel = (angle - start).rem_euclid(2.0 * PI);
                if rel <= sweep {
                    ((d[0] * d[0] + d[1] * d[1]).sqrt() - radius).abs()
                } else {
                    let end = |a: f64| [center[0] + radius * a.sin(), center[1] + radius * a.cos()];
                    let (e0, e1) = (end(start), end(start + sweep));
                    let d0 = ((p[0] - e0[0]).powi(2) + (p[1] - e0[1]).powi(2)).sqrt();
                    let d1 = ((p[0] - e1[0]).powi(2) + (p[1] - e1[1]).powi(2)).sqrt();
                    d0.min(d1)
                }
            }
        }
    }

    fn draw(&self, img: &mut GrayPatch) {
        for r in 0..img.height {
            for c in 0..img.width {
                let center = [r as f64 + 0.5, c as f64 + 0.5];
                let coverage = (self.thickness / 2.0 + 0.5 - self.distance(center)).clamp(0.0, 1.0);
                if coverage > 0.0 {
                    let v = 1.0 - coverage * (1.0 - self.ink);
                    if v < img.get(r, c) {
                        img.set(r, c, v);
                    }
                }
            }
        }
    }
}

/// Noise levels on the 0-255 intensity scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeConfig {
    pub gaussian_sigma: f64,
    pub speckle_sigma: f64,
    pub seed: u64,
}

/// `clamp(clean * (1 + eta) + eps)` with `eta ~ N(0, speckle^2)` and
/// `eps ~ N(0, gaussian^2)`, sigmas rescaled from 8-bit to unit intensity.
pub fn degrade(clean: &GrayPatch, cfg: &DegradeConfig) -> Result<GrayPatch> {
    if !(cfg.gaussian_sigma >= 0.0 && cfg.speckle_sigma >= 0.0) {
        return Err(Error::config("noise sigmas must be non-negative"));
    }
    let gs = cfg.gaussian_sigma / 255.0;
    let ss = cfg.speckle_sigma / 255.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pixels = clean
        .pixels
        .iter()
        .map(|&v| {
            let eta: f64 = StandardNormal.sample(&mut rng);
            let eps: f64 = StandardNormal.sample(&mut rng);
            (v * (1.0 + ss * eta) + gs * eps).clamp(0.0, 1.0)
        })
        .collect();
    GrayPatch::new(clean.height, clean.width, pixels)
}
