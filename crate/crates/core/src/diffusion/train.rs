use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::DenoiserModel;
use super::nn::{assemble_input, time_embedding, Mlp, MlpArch};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate at the last step as a fraction of `lr` (cosine decay).
    /// `1.0` keeps it constant.
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    pub seed: u64,
    /// Training-loss averaging window for the log.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 256,
            lr: 2e-4,
            final_lr_fraction: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 1.0,
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.lr > 0.0
            && (0.0..=1.0).contains(&self.final_lr_fraction)
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0
            && self.grad_clip > 0.0
            && self.log_every > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid training config {self:?}")))
        }
    }

    fn lr_at(&self, step: usize) -> f64 {
        if self.final_lr_fraction >= 1.0 || self.steps <= 1 {
            return self.lr;
        }
        let progress = step as f64 / (self.steps - 1) as f64;
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.lr * (self.final_lr_fraction + (1.0 - self.final_lr_fraction) * cos)
    }
}

/// Mean training loss over consecutive windows of `log_every` steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub domain_tag: String,
    /// Last step index of each window.
    pub steps: Vec<usize>,
    pub losses: Vec<f64>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (s, l) in self.steps.iter().zip(&self.losses) {
            out.push_str(&format!("{s},{l}\n"));
        }
        out
    }
}

/// Per-sample timesteps and noise for one Monte-Carlo loss estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraws {
    pub t: Vec<usize>,
    pub eps: Array2<f64>,
}

/// `t ~ Uniform{1..T}` and `eps ~ N(0, I)` per sample.
pub fn draw_noise<R: Rng>(n: usize, dim: usize, t_max: usize, rng: &mut R) -> NoiseDraws {
    let t = (0..n).map(|_| rng.random_range(1..=t_max)).collect();
    let eps = Array2::from_shape_simple_fn((n, dim), || rng.sample(StandardNormal));
    NoiseDraws { t, eps }
}

fn embedding_table(arch: &MlpArch, t_max: usize) -> Vec<Array1<f64>> {
    (0..=t_max)
        .map(|t| Array1::from(time_embedding(t as f64, arch.time_embed_dim)))
        .collect()
}

fn noised_input(
    x0: ArrayView2<f64>,
    draws: &NoiseDraws,
    schedule: &NoiseSchedule,
    table: &[Array1<f64>],
) -> Array2<f64> {
    let mut xt = x0.to_owned();
    for (i, mut row) in xt.rows_mut().into_iter().enumerate() {
        let a = schedule.alpha(draws.t[i]);
        let (ca, cn) = (a.sqrt(), (1.0 - a).sqrt());
        row.zip_mut_with(&draws.eps.row(i), |x, e| *x = ca * *x + cn * e);
    }
    assemble_input(xt.view(), table, |i| draws.t[i])
}

fn check_batch(arch: &MlpArch, x0: ArrayView2<f64>, draws: &NoiseDraws) -> Result<()> {
    if x0.ncols() != arch.data_dim || draws.eps.dim() != x0.dim() || draws.t.len() != x0.nrows() {
        return Err(Error::Shape {
            expected: vec![x0.nrows(), arch.data_dim],
            found: draws.eps.shape().to_vec(),
        });
    }
    if x0.nrows() == 0 {
        return Err(Error::config("loss needs a nonempty batch"));
    }
    Ok(())
}

/// `mean_i || eps_theta(sqrt(a) x0_i + sqrt(1-a) eps_i, t_i) - eps_i ||^2`.
pub fn loss_value(
    arch: &MlpArch,
    params: &[f64],
    schedule: &NoiseSchedule,
    x0: ArrayView2<f64>,
    draws: &NoiseDraws,
) -> Result<f64> {
    check_batch(arch, x0, draws)?;
    let table = embedding_table(arch, schedule.timesteps());
    let input = noised_input(x0, draws, schedule, &table);
    let pred = Mlp::new(arch, params).forward(input.view());
    let diff = pred - &draws.eps;
    Ok(diff.mapv(|v| v * v).sum() / x0.nrows() as f64)
}

/// Loss and its gradient with respect to `params`.
pub fn loss_and_grad(
    arch: &MlpArch,
    params: &[f64],
    schedule: &NoiseSchedule,
    x0: ArrayView2<f64>,
    draws: &NoiseDraws,
) -> Result<(f64, Vec<f64>)> {
    check_batch(arch, x0, draws)?;
    let table = embedding_table(arch, schedule.timesteps());
    let mut grad = vec![0.0; params.len()];
    let loss = accumulate(arch, params, schedule, x0, draws, &table, &mut grad);
    Ok((loss, grad))
}

fn accumulate(
    arch: &MlpArch,
    params: &[f64],
    schedule: &NoiseSchedule,
    x0: ArrayView2<f64>,
    draws: &NoiseDraws,
    table: &[Array1<f64>],
    grad: &mut [f64],
) -> f64 {
    let n = x0.nrows() as f64;
    let net = Mlp::new(arch, params);
    let input = noised_input(x0, draws, schedule, table);
    let (pred, cache) = net.forward_cached(input);
    let diff = pred - &draws.eps;
    let loss = diff.mapv(|v| v * v).sum() / n;
    net.backward(&cache, diff * (2.0 / n), grad);
    loss
}

/// One Monte-Carlo estimate of the denoising loss for `model` on `x0`.
pub fn denoise_loss<R: Rng>(
    model: &DenoiserModel,
    x0: ArrayView2<f64>,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    let draws = draw_noise(
        x0.nrows(),
        model.data_dim(),
        model.schedule.timesteps(),
        rng,
    );
    loss_and_grad(&model.arch, &model.params, &model.schedule, x0, &draws)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Trains a fresh model on one domain's samples (rows of `data`).
///
/// Nothing but `data` is read. The returned parameters are rounded to f32,
/// which is the checkpoint precision.
pub fn train(
    data: ArrayView2<f64>,
    arch: &MlpArch,
    cfg: &TrainConfig,
    schedule: &NoiseSchedule,
    domain_tag: &str,
    data_shape: Vec<usize>,
) -> Result<(DenoiserModel, TrainLog)> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(Error::config(format!(
            "training set for '{domain_tag}' is empty"
        )));
    }
    if data.ncols() != arch.data_dim {
        return Err(Error::Shape {
            expected: vec![arch.data_dim],
            found: vec![data.ncols()],
        });
    }
    let mut model = DenoiserModel::init(
        arch.clone(),
        schedule.clone(),
        domain_tag,
        data_shape,
        cfg.seed,
    )?;
    let mut log = TrainLog {
        domain_tag: domain_tag.to_string(),
        ..TrainLog::default()
    };
    if cfg.steps == 0 {
        return Ok((model, log));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e_5eed);
    let table = embedding_table(arch, schedule.timesteps());
    let mut adam = Adam::new(model.params.len());
    let mut grad = vec![0.0; model.params.len()];
    let mut batch = Array2::zeros((cfg.batch_size, arch.data_dim));
    let mut window = 0.0;
    for step in 0..cfg.steps {
        for mut row in batch.rows_mut() {
            let idx = rng.random_range(0..data.nrows());
            row.assign(&data.row(idx));
        }
        let draws = draw_noise(
            cfg.batch_size,
            arch.data_dim,
            schedule.timesteps(),
            &mut rng,
        );
        grad.fill(0.0);
        let loss = accumulate(
            arch,
            &model.params,
            schedule,
            batch.view(),
            &draws,
            &table,
            &mut grad,
        );
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > cfg.grad_clip {
            let scale = cfg.grad_clip / norm;
            grad.iter_mut().for_each(|g| *g *= scale);
        }
        adam.step(&mut model.params, &grad, cfg.lr_at(step), cfg);

        window += loss;
        if (step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps {
            let len = (step % cfg.log_every) + 1;
            log.steps.push(step);
            log.losses.push(window / len as f64);
            window = 0.0;
        }
    }
    for p in &mut model.params {
        *p = *p as f32 as f64;
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Divergence {
            step: cfg.steps,
            loss: f64::NAN,
        });
    }
    Ok((model, log))
}
