use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest admissible terminal `alpha_T`; keeps `sigma(T)` finite.
pub const ALPHA_T_CEILING: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    LinearBeta,
    Cosine,
    /// Built directly from an explicit alpha sequence.
    Custom,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::LinearBeta => "linear-beta",
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::Custom => "custom",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "linear-beta" => Ok(ScheduleKind::LinearBeta),
            "cosine" => Ok(ScheduleKind::Cosine),
            _ => Err(Error::config(format!("unknown schedule '{s}'"))),
        }
    }
}

/// Cumulative signal retention `alpha_t` for `t = 0..=T`.
///
/// `alpha_0 = 1`, strictly decreasing, `0 < alpha_T <= 1e-4`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alphas_cum: Vec<f64>,
    kind: ScheduleKind,
}

impl NoiseSchedule {
    /// Validates an explicit sequence.
    pub fn from_alphas(alphas_cum: Vec<f64>, kind: ScheduleKind) -> Result<Self> {
        if alphas_cum.len() < 3 {
            return Err(Error::config("schedule needs T >= 2"));
        }
        if alphas_cum[0] != 1.0 {
            return Err(Error::Numeric(format!(
                "alpha_0 must be 1, got {}",
                alphas_cum[0]
            )));
        }
        let last = *alphas_cum.last().unwrap();
        if !(last > 0.0 && last <= ALPHA_T_CEILING) {
            return Err(Error::Numeric(format!(
                "alpha_T must lie in (0, {ALPHA_T_CEILING}], got {last}"
            )));
        }
        if let Some(t) = alphas_cum.windows(2).position(|w| !(w[1] < w[0])) {
            return Err(Error::Numeric(format!(
                "schedule not strictly decreasing at t = {}",
                t + 1
            )));
        }
        Ok(Self { alphas_cum, kind })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of diffusion steps `T`.
    pub fn timesteps(&self) -> usize {
        self.alphas_cum.len() - 1
    }

    pub fn alphas_cum(&self) -> &[f64] {
        &self.alphas_cum
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas_cum[t]
    }

    /// `sqrt(1 - alpha_t) / sqrt(alpha_t)`, the noise-to-signal ratio.
    pub fn sigma(&self, t: usize) -> f64 {
        let a = self.alphas_cum[t];
        ((1.0 - a) / a).sqrt()
    }

    /// Rescaled sample `x / sqrt(alpha_t)`; the DDIM update is an Euler step
    /// in these coordinates with `sigma` as time.
    pub fn scaled(&self, x: f64, t: usize) -> f64 {
        x / self.alphas_cum[t].sqrt()
    }

    /// SHA-256 over the little-endian f32 encoding of the alphas, hex.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for a in &self.alphas_cum {
            h.update((*a as f32).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Builds a schedule of `t_max` steps.
///
/// Values are rounded to f32 so checkpoints round-trip bit-exactly.
pub fn make_schedule(t_max: usize, kind: ScheduleKind) -> Result<NoiseSchedule> {
    if t_max < 2 {
        return Err(Error::config(format!("schedule needs T >= 2, got {t_max}")));
    }
    let mut alphas = match kind {
        ScheduleKind::LinearBeta => {
            let (b0, b1) = (1e-4, 2e-2);
            let mut acc = 1.0;
            let mut alphas = vec![1.0];
            for i in 0..t_max {
                let beta = b0 + (b1 - b0) * i as f64 / (t_max - 1) as f64;
                acc *= 1.0 - beta;
                alphas.push(acc);
            }
            alphas
        }
        ScheduleKind::Cosine => {
            let s = 0.008;
            let f = |t: usize| {
                let x = (t as f64 / t_max as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2;
                x.cos().powi(2)
            };
            let f0 = f(0);
            let mut alphas = vec![1.0];
            let mut acc = 1.0;
            for t in 1..=t_max {
                let beta = (1.0 - f(t) / f(t - 1)).min(0.999);
                acc *= 1.0 - beta;
                alphas.push(acc);
            }
            debug_assert!((alphas[t_max / 2] - f(t_max / 2) / f0).abs() < 1e-9);
            alphas
        }
        ScheduleKind::Custom => {
            return Err(Error::config(
                "custom schedules come from NoiseSchedule::from_alphas",
            ))
        }
    };
    let last = alphas.len() - 1;
    if alphas[last] > ALPHA_T_CEILING {
        alphas[last] = ALPHA_T_CEILING.min(alphas[last - 1] / 2.0);
    }
    for a in alphas.iter_mut() {
        *a = *a as f32 as f64;
    }
    NoiseSchedule::from_alphas(alphas, kind)
}

/// `sqrt(alpha_t) x0 + sqrt(1 - alpha_t) eps`, row-wise.
pub fn forward_sample(
    x0: ArrayView2<f64>,
    t: usize,
    eps: ArrayView2<f64>,
    schedule: &NoiseSchedule,
) -> Result<Array2<f64>> {
    if t > schedule.timesteps() {
        return Err(Error::config(format!(
            "timestep {t} outside [0, {}]",
            schedule.timesteps()
        )));
    }
    if x0.dim() != eps.dim() {
        return Err(Error::Shape {
            expected: x0.shape().to_vec(),
            found: eps.shape().to_vec(),
        });
    }
    let a = schedule.alpha(t);
    let (ca, cn) = (a.sqrt(), (1.0 - a).sqrt());
    Ok(&x0 * ca + &eps * cn)
}
