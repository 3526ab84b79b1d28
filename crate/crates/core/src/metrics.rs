//! Image quality and cycle metrics.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::GrayPatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    /// `f64::INFINITY` for identical images.
    pub psnr_db: f64,
    pub ssim: f64,
    /// Where the reference image came from.
    pub notes: String,
}

impl MetricReport {
    pub fn evaluate(
        name: impl Into<String>,
        reference: &GrayPatch,
        test: &GrayPatch,
        notes: impl Into<String>,
    ) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            psnr_db: psnr(reference, test)?,
            ssim: ssim(reference, test, &SsimConfig::default())?,
            notes: notes.into(),
        })
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.name, format_db(self.psnr_db), self.ssim)
    }
}

pub const METRICS_CSV_HEADER: &str = "name,psnr_db,ssim";

/// `inf` for the zero-error sentinel.
pub fn format_db(db: f64) -> String {
    if db.is_infinite() {
        "inf".to_string()
    } else {
        format!("{db}")
    }
}

fn check_dims(a: &GrayPatch, b: &GrayPatch) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape {
            expected: vec![a.height, a.width],
            found: vec![b.height, b.width],
        });
    }
    Ok(())
}

/// `10 log10(1 / MSE)` on unit-range intensities.
pub fn psnr(reference: &GrayPatch, test: &GrayPatch) -> Result<f64> {
    check_dims(reference, test)?;
    let mse = reference
        .pixels
        .iter()
        .zip(&test.pixels)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the intensities.
    pub range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            range: 1.0,
        }
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" Gaussian filtering of an `h x w` field.
fn filter_valid(field: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut horiz = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            horiz[r * ow + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, g)| g * field[r * w + c + k])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, g)| g * horiz[(r + k) * ow + c])
                .sum();
        }
    }
    out
}

/// Mean SSIM over every fully contained Gaussian window.
pub fn ssim(reference: &GrayPatch, test: &GrayPatch, cfg: &SsimConfig) -> Result<f64> {
    check_dims(reference, test)?;
    let (h, w) = reference.dims();
    if h < cfg.window || w < cfg.window || cfg.window == 0 {
        return Err(Error::config(format!(
            "ssim window {} larger than image {h}x{w}",
            cfg.window
        )));
    }
    let kernel = gaussian_kernel(cfg.window, cfg.sigma);
    let x = &reference.pixels;
    let y = &test.pixels;
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, h, w, &kernel);
    let my = filter_valid(y, h, w, &kernel);
    let sxx = filter_valid(&xx, h, w, &kernel);
    let syy = filter_valid(&yy, h, w, &kernel);
    let sxy = filter_valid(&xy, h, w, &kernel);
    let c1 = (cfg.k1 * cfg.range).powi(2);
    let c2 = (cfg.k2 * cfg.range).powi(2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        let num = (2.0 * ux * uy + c1) * (2.0 * cov + c2);
        let den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
        total += num / den;
    }
    Ok(total / mx.len() as f64)
}

fn check_batches(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape {
            expected: a.shape().to_vec(),
            found: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Per-row Euclidean distances.
pub fn row_distances(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Vec<f64>> {
    check_batches(a, b)?;
    Ok(a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| {
            x.iter()
                .zip(y.iter())
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Mean Euclidean distance between matching rows.
pub fn cycle_l2(original: ArrayView2<f64>, reconstructed: ArrayView2<f64>) -> Result<f64> {
    let d = row_distances(original, reconstructed)?;
    if d.is_empty() {
        return Err(Error::config("cycle_l2 needs at least one sample"));
    }
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Distance from each sample to its nearest reference row (brute force).
pub fn nearest_distances(samples: ArrayView2<f64>, reference: ArrayView2<f64>) -> Result<Vec<f64>> {
    if reference.nrows() == 0 {
        return Err(Error::config("reference set is empty"));
    }
    if samples.ncols() != reference.ncols() {
        return Err(Error::Shape {
            expected: vec![reference.ncols()],
            found: vec![samples.ncols()],
        });
    }
    Ok(samples
        .rows()
        .into_iter()
        .map(|s| {
            reference
                .rows()
                .into_iter()
                .map(|r| {
                    s.iter()
                        .zip(r.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect())
}

/// Fraction of samples within `radius` of some reference point; `0` for an
/// empty sample set.
pub fn manifold_proximity(
    samples: ArrayView2<f64>,
    reference: ArrayView2<f64>,
    radius: f64,
) -> Result<f64> {
    let d = nearest_distances(samples, reference)?;
    if d.is_empty() {
        return Ok(0.0);
    }
    Ok(d.iter().filter(|v| **v <= radius).count() as f64 / d.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::render_strokes;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn psnr_sentinel_and_closed_forms() {
        let a = render_strokes(1, 32, 32, 0.1).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let zeros = GrayPatch::filled(8, 8, 0.0);
        let ones = GrayPatch::filled(8, 8, 1.0);
        assert_eq!(psnr(&zeros, &ones).unwrap(), 0.0);
        let shifted = GrayPatch::filled(8, 8, 0.5 + 1.0 / 255.0);
        let db = psnr(&GrayPatch::filled(8, 8, 0.5), &shifted).unwrap();
        assert!((db - 20.0 * 255f64.log10()).abs() < 1e-9);
        assert!((db - 48.13).abs() < 0.01);
    }

    #[test]
    fn psnr_is_scale_free_between_conventions() {
        let a = render_strokes(2, 16, 16, 0.2).unwrap();
        let b = GrayPatch::new(16, 16, a.pixels.iter().map(|v| v * 0.9 + 0.05).collect()).unwrap();
        let unit = psnr(&a, &b).unwrap();
        let mse8: f64 = a
            .pixels
            .iter()
            .zip(&b.pixels)
            .map(|(x, y)| (255.0 * (x - y)).powi(2))
            .sum::<f64>()
            / 256.0;
        let eight = 10.0 * (255.0f64 * 255.0 / mse8).log10();
        assert!((unit - eight).abs() < 1e-9);
    }

    #[test]
    fn dims_must_match() {
        let a = GrayPatch::filled(16, 16, 0.0);
        let b = GrayPatch::filled(16, 12, 0.0);
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b, &SsimConfig::default()).is_err());
        assert!(ssim(
            &GrayPatch::filled(8, 8, 0.0),
            &GrayPatch::filled(8, 8, 0.0),
            &SsimConfig::default()
        )
        .is_err());
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let x = render_strokes(5, 64, 64, 0.2).unwrap();
        assert_eq!(ssim(&x, &x, &SsimConfig::default()).unwrap(), 1.0);
        let inv = GrayPatch::new(64, 64, x.pixels.iter().map(|v| 1.0 - v).collect()).unwrap();
        let s = ssim(&x, &inv, &SsimConfig::default()).unwrap();
        assert!(s < 0.3, "{s}");
        let nudged = GrayPatch::new(64, 64, x.pixels.iter().map(|v| v + 1e-4).collect()).unwrap();
        assert!(ssim(&x, &nudged, &SsimConfig::default()).unwrap() >= 0.999);
    }

    #[test]
    fn ssim_symmetric() {
        let a = render_strokes(6, 32, 32, 0.1).unwrap();
        let b = render_strokes(7, 32, 32, 0.1).unwrap();
        let cfg = SsimConfig::default();
        assert!((ssim(&a, &b, &cfg).unwrap() - ssim(&b, &a, &cfg).unwrap()).abs() < 1e-12);
        assert!(ssim(&a, &b, &cfg).unwrap() < 1.0);
    }

    #[test]
    fn cycle_l2_cases() {
        let a = array![[0.0, 0.0], [1.0, 1.0]];
        assert_eq!(cycle_l2(a.view(), a.view()).unwrap(), 0.0);
        let b = &a + &array![[0.003, 0.004]];
        assert!((cycle_l2(a.view(), b.view()).unwrap() - 0.005).abs() < 1e-15);
        assert!(cycle_l2(a.view(), array![[0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn proximity_cases() {
        let r = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert_eq!(manifold_proximity(r.view(), r.view(), 1e-9).unwrap(), 1.0);
        let far = &r + 100.0;
        assert_eq!(manifold_proximity(far.view(), r.view(), 1.0).unwrap(), 0.0);
        assert!(manifold_proximity(r.view(), Array2::zeros((0, 2)).view(), 1.0).is_err());
    }

    proptest! {
        #[test]
        fn cycle_l2_is_a_metric(
            a in proptest::collection::vec(-5.0f64..5.0, 6),
            b in proptest::collection::vec(-5.0f64..5.0, 6),
            c in proptest::collection::vec(-5.0f64..5.0, 6),
        ) {
            let a = Array2::from_shape_vec((3, 2), a).unwrap();
            let b = Array2::from_shape_vec((3, 2), b).unwrap();
            let c = Array2::from_shape_vec((3, 2), c).unwrap();
            let ab = cycle_l2(a.view(), b.view()).unwrap();
            let ba = cycle_l2(b.view(), a.view()).unwrap();
            let bc = cycle_l2(b.view(), c.view()).unwrap();
            let ac = cycle_l2(a.view(), c.view()).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn psnr_symmetric_and_monotone(v in 0.0f64..0.5, d1 in 0.001f64..0.2, d2 in 0.001f64..0.2) {
            let base = GrayPatch::filled(4, 4, v);
            let p1 = GrayPatch::filled(4, 4, v + d1);
            let p2 = GrayPatch::filled(4, 4, v + d2);
            prop_assert!((psnr(&base, &p1).unwrap() - psnr(&p1, &base).unwrap()).abs() < 1e-12);
            if d1 < d2 {
                prop_assert!(psnr(&base, &p1).unwrap() > psnr(&base, &p2).unwrap());
            }
        }
    }
}
