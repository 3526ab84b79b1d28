//! Deterministic DDIM integration between data (t = 0) and the Gaussian
//! latent (t = T).
//!
//! One step from `t` to `s` with `eps = eps_theta(x_t, t)`:
//!
//! ```text
//! x_s = sqrt(a_s / a_t) x_t + sqrt(a_s) (sigma_s - sigma_t) eps
//! ```
//!
//! where `sigma = sqrt((1 - a) / a)`. With `s < t` this is the generative
//! update; with `s > t` it is the inversion update. In the rescaled
//! coordinates `x / sqrt(a)` both are Euler steps of the same ODE in `sigma`,
//! so for a constant `eps` the two directions are exact inverses.

mod latent_file;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DenoiserModel, EpsPredictor};
use crate::error::{Error, Result};

pub use latent_file::{read_latent_file, write_latent_file, LATENT_MAGIC, LATENT_VERSION};

/// Default number of DDIM steps between data and latent.
pub const DEFAULT_STEPS: usize = 200;

/// Rows integrated together; fixed so results never depend on thread count.
const CHUNK_ROWS: usize = 256;

/// A strictly monotone timestep grid from `t_start` to `t_end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationPlan {
    timesteps: Vec<usize>,
}

impl IntegrationPlan {
    /// Uniform stride over `[t_start, t_end]` (either direction).
    pub fn new(t_start: usize, t_end: usize, n_steps: usize) -> Result<Self> {
        let span = t_start.abs_diff(t_end);
        if n_steps == 0 || n_steps > span {
            return Err(Error::config(format!(
                "cannot take {n_steps} steps between t = {t_start} and t = {t_end}"
            )));
        }
        let (a, b) = (t_start as f64, t_end as f64);
        let timesteps = (0..=n_steps)
            .map(|i| (a + (b - a) * i as f64 / n_steps as f64).round() as usize)
            .collect();
        Self::from_timesteps(timesteps)
    }

    pub fn from_timesteps(timesteps: Vec<usize>) -> Result<Self> {
        let ascending = timesteps.len() >= 2 && timesteps.windows(2).all(|w| w[0] < w[1]);
        let descending = timesteps.len() >= 2 && timesteps.windows(2).all(|w| w[0] > w[1]);
        if !(ascending || descending) {
            return Err(Error::config(format!(
                "timesteps must be strictly monotone with at least one step: {timesteps:?}"
            )));
        }
        Ok(Self { timesteps })
    }

    /// Data to latent: `0 -> T`.
    pub fn encoding(t_max: usize, n_steps: usize) -> Result<Self> {
        Self::new(0, t_max, n_steps)
    }

    /// Latent to data: `T -> 0`.
    pub fn decoding(t_max: usize, n_steps: usize) -> Result<Self> {
        Self::new(t_max, 0, n_steps)
    }

    pub fn t_start(&self) -> usize {
        self.timesteps[0]
    }

    pub fn t_end(&self) -> usize {
        *self.timesteps.last().unwrap()
    }

    pub fn n_steps(&self) -> usize {
        self.timesteps.len() - 1
    }

    pub fn timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    pub fn is_ascending(&self) -> bool {
        self.t_end() > self.t_start()
    }

    /// Same grid, opposite direction.
    pub fn reversed(&self) -> Self {
        let mut timesteps = self.timesteps.clone();
        timesteps.reverse();
        Self { timesteps }
    }
}

/// One DDIM transfer `from -> to`, `eps` evaluated at `(x, from)`.
fn transfer<P: EpsPredictor + ?Sized>(
    x: ArrayView2<f64>,
    from: usize,
    to: usize,
    model: &P,
) -> Array2<f64> {
    let s = model.schedule();
    let (a_from, a_to) = (s.alpha(from), s.alpha(to));
    let eps = model.predict_eps(x, from as f64);
    let cx = (a_to / a_from).sqrt();
    let ce = a_to.sqrt() * (s.sigma(to) - s.sigma(from));
    let mut out = eps * ce;
    out.scaled_add(cx, &x);
    out
}

fn check_time<P: EpsPredictor + ?Sized>(model: &P, t: usize) -> Result<()> {
    let t_max = model.schedule().timesteps();
    if t > t_max {
        return Err(Error::config(format!("timestep {t} outside [0, {t_max}]")));
    }
    Ok(())
}

fn check_width<P: EpsPredictor + ?Sized>(model: &P, x: ArrayView2<f64>) -> Result<()> {
    if x.ncols() != model.data_dim() {
        return Err(Error::Shape {
            expected: vec![model.data_dim()],
            found: vec![x.ncols()],
        });
    }
    Ok(())
}

/// Generative step `x_t -> x_{t_prev}`, `t_prev < t`.
pub fn ddim_step_reverse<P: EpsPredictor + ?Sized>(
    x_t: ArrayView2<f64>,
    t: usize,
    t_prev: usize,
    model: &P,
) -> Result<Array2<f64>> {
    if t_prev >= t {
        return Err(Error::config(format!(
            "reverse step needs t_prev < t, got {t_prev} >= {t}"
        )));
    }
    check_time(model, t)?;
    check_width(model, x_t)?;
    Ok(transfer(x_t, t, t_prev, model))
}

/// Inversion step `x_t -> x_{t_next}`, `t_next > t`.
pub fn ddim_step_forward<P: EpsPredictor + ?Sized>(
    x_t: ArrayView2<f64>,
    t: usize,
    t_next: usize,
    model: &P,
) -> Result<Array2<f64>> {
    if t_next <= t {
        return Err(Error::config(format!(
            "forward step needs t_next > t, got {t_next} <= {t}"
        )));
    }
    check_time(model, t_next)?;
    check_width(model, x_t)?;
    Ok(transfer(x_t, t, t_next, model))
}

/// Composes DDIM steps along `plan`. Rows are independent.
pub fn s_ode<P: EpsPredictor + ?Sized>(
    x: ArrayView2<f64>,
    model: &P,
    plan: &IntegrationPlan,
) -> Result<Array2<f64>> {
    check_width(model, x)?;
    let t_max = model.schedule().timesteps();
    if plan.t_start().max(plan.t_end()) > t_max {
        return Err(Error::config(format!(
            "plan [{}, {}] exceeds schedule length {t_max}",
            plan.t_start(),
            plan.t_end()
        )));
    }
    if x.nrows() == 0 {
        return Ok(x.to_owned());
    }
    let run = |chunk: ArrayView2<f64>| {
        let mut cur = chunk.to_owned();
        for w in plan.timesteps().windows(2) {
            cur = transfer(cur.view(), w[0], w[1], model);
        }
        cur
    };
    let chunks: Vec<ArrayView2<f64>> = x.axis_chunks_iter(Axis(0), CHUNK_ROWS).collect();
    let outs: Vec<Array2<f64>> = chunks.into_par_iter().map(run).collect();
    let views: Vec<_> = outs.iter().map(|a| a.view()).collect();
    concatenate(Axis(0), &views).map_err(|e| Error::Internal(e.to_string()))
}

/// Encoded samples at the end of an ascending plan, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub latents: Array2<f64>,
    pub source_domain_tag: String,
    pub schedule_hash: String,
    pub data_shape: Vec<usize>,
    pub plan: IntegrationPlan,
}

impl LatentBatch {
    pub fn len(&self) -> usize {
        self.latents.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.nrows() == 0
    }

    /// The same batch at wire precision (f32), as it would be received.
    pub fn quantized(&self) -> Self {
        Self {
            latents: self.latents.mapv(|v| v as f32 as f64),
            ..self.clone()
        }
    }
}

/// Encodes `batch` with `n_steps` DDIM inversion steps from `0` to `T`.
pub fn encode(
    model: &DenoiserModel,
    batch: ArrayView2<f64>,
    n_steps: usize,
) -> Result<LatentBatch> {
    let plan = IntegrationPlan::encoding(model.schedule.timesteps(), n_steps)?;
    encode_with_plan(model, batch, plan)
}

/// Encodes along an arbitrary ascending plan, e.g. to a partial depth.
pub fn encode_with_plan(
    model: &DenoiserModel,
    batch: ArrayView2<f64>,
    plan: IntegrationPlan,
) -> Result<LatentBatch> {
    if !plan.is_ascending() {
        return Err(Error::config("encoding needs an ascending plan"));
    }
    let latents = s_ode(batch, model, &plan)?;
    Ok(LatentBatch {
        latents,
        source_domain_tag: model.domain_tag.clone(),
        schedule_hash: model.schedule.hash(),
        data_shape: model.data_shape.clone(),
        plan,
    })
}

/// Integrates a latent batch back to data along the reversed plan. The
/// model may belong to a different domain than the encoder.
pub fn decode(model: &DenoiserModel, latent: &LatentBatch) -> Result<Array2<f64>> {
    if latent.data_shape != model.data_shape {
        return Err(Error::Shape {
            expected: model.data_shape.clone(),
            found: latent.data_shape.clone(),
        });
    }
    s_ode(latent.latents.view(), model, &latent.plan.reversed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{make_schedule, MlpArch, NoiseSchedule, ScheduleKind};
    use ndarray::array;

    struct Const {
        schedule: NoiseSchedule,
        value: Vec<f64>,
    }

    impl EpsPredictor for Const {
        fn schedule(&self) -> &NoiseSchedule {
            &self.schedule
        }
        fn data_dim(&self) -> usize {
            self.value.len()
        }
        fn predict_eps(&self, x: ArrayView2<f64>, _t: f64) -> Array2<f64> {
            Array2::from_shape_fn(x.dim(), |(_, j)| self.value[j])
        }
    }

    fn linear() -> NoiseSchedule {
        make_schedule(1000, ScheduleKind::LinearBeta).unwrap()
    }

    #[test]
    fn plan_grid() {
        let p = IntegrationPlan::encoding(1000, 200).unwrap();
        assert_eq!(p.n_steps(), 200);
        assert_eq!(p.timesteps()[..3], [0, 5, 10]);
        assert_eq!(p.t_end(), 1000);
        let r = p.reversed();
        assert!(!r.is_ascending());
        assert_eq!(r.t_start(), 1000);
        let odd = IntegrationPlan::new(0, 10, 3).unwrap();
        assert_eq!(odd.timesteps(), &[0, 3, 7, 10]);
        assert!(IntegrationPlan::new(0, 10, 11).is_err());
        assert!(IntegrationPlan::new(5, 5, 1).is_err());
        assert!(IntegrationPlan::from_timesteps(vec![0, 3, 3]).is_err());
    }

    #[test]
    fn zero_eps_reverse_is_rescaling() {
        let s = linear();
        let m = Const {
            schedule: s.clone(),
            value: vec![0.0, 0.0],
        };
        let x = array![[0.7, -1.3]];
        let out = ddim_step_reverse(x.view(), 400, 350, &m).unwrap();
        let c = (s.alpha(350) / s.alpha(400)).sqrt();
        assert_eq!(out, &x * c);
    }

    #[test]
    fn hand_evaluated_reverse_step() {
        let s =
            NoiseSchedule::from_alphas(vec![1.0, 0.81, 0.25, 1e-5], ScheduleKind::Custom).unwrap();
        let m = Const {
            schedule: s,
            value: vec![0.0, 1.0],
        };
        let out = ddim_step_reverse(array![[1.0, 0.0]].view(), 2, 1, &m).unwrap();
        // sqrt(.81/.25) = 1.8; sqrt(.81) (sqrt(.19/.81) - sqrt(.75/.25)) = sqrt(.19) - .9 sqrt(3)
        let expected_e = 0.19f64.sqrt() - 0.9 * 3f64.sqrt();
        assert!((out[[0, 0]] - 1.8).abs() < 1e-15);
        assert!((out[[0, 1]] - expected_e).abs() < 1e-15);
        assert!((expected_e - (-1.122_955_8)).abs() < 1e-6);
    }

    #[test]
    fn step_preconditions() {
        let m = Const {
            schedule: linear(),
            value: vec![0.0],
        };
        let x = array![[1.0]];
        assert!(ddim_step_reverse(x.view(), 10, 10, &m).is_err());
        assert!(ddim_step_forward(x.view(), 10, 10, &m).is_err());
        assert!(ddim_step_forward(x.view(), 10, 1001, &m).is_err());
        assert!(ddim_step_forward(array![[1.0, 2.0]].view(), 1, 2, &m).is_err());
    }

    #[test]
    fn constant_eps_steps_invert_exactly() {
        let m = Const {
            schedule: linear(),
            value: vec![0.4, -2.0],
        };
        let x = array![[1.5, -0.25], [0.0, 3.0]];
        for (t, t2) in [(0, 5), (5, 300), (990, 1000)] {
            let up = ddim_step_forward(x.view(), t, t2, &m).unwrap();
            let back = ddim_step_reverse(up.view(), t2, t, &m).unwrap();
            for (a, b) in back.iter().zip(x.iter()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn forward_from_origin_is_affine_in_eps() {
        let s = linear();
        let c = vec![0.3, -0.6];
        let m = Const {
            schedule: s.clone(),
            value: c.clone(),
        };
        let out = ddim_step_forward(array![[0.0, 0.0]].view(), 100, 200, &m).unwrap();
        let k = s.alpha(200).sqrt() * (s.sigma(200) - s.sigma(100));
        assert!((out[[0, 0]] - k * c[0]).abs() < 1e-15);
        assert!((out[[0, 1]] - k * c[1]).abs() < 1e-15);
    }

    #[test]
    fn single_step_plan_matches_step() {
        let model = DenoiserModel::init(MlpArch::points(2), linear(), "tm", vec![2], 1).unwrap();
        let x = array![[0.2, 0.9], [-1.0, 0.1]];
        let plan = IntegrationPlan::new(100, 400, 1).unwrap();
        let a = s_ode(x.view(), &model, &plan).unwrap();
        let b = ddim_step_forward(x.view(), 100, 400, &model).unwrap();
        assert_eq!(a, b);
        let down = s_ode(x.view(), &model, &plan.reversed()).unwrap();
        assert_eq!(down, ddim_step_reverse(x.view(), 400, 100, &model).unwrap());
    }

    #[test]
    fn plan_beyond_schedule_rejected() {
        let model = DenoiserModel::zero(
            make_schedule(100, ScheduleKind::LinearBeta).unwrap(),
            "z",
            2,
        )
        .unwrap();
        let plan = IntegrationPlan::encoding(1000, 10).unwrap();
        assert!(s_ode(array![[0.0, 0.0]].view(), &model, &plan).is_err());
    }

    #[test]
    fn chunking_does_not_change_rows() {
        let model = DenoiserModel::init(MlpArch::points(2), linear(), "tm", vec![2], 2).unwrap();
        let x = Array2::from_shape_fn((600, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let plan = IntegrationPlan::encoding(1000, 20).unwrap();
        let all = s_ode(x.view(), &model, &plan).unwrap();
        let one = s_ode(x.slice(ndarray::s![300..301, ..]), &model, &plan).unwrap();
        assert_eq!(all.row(300), one.row(0));
    }

    #[test]
    fn empty_and_repeated_encode() {
        let model = DenoiserModel::init(MlpArch::points(2), linear(), "cr", vec![2], 3).unwrap();
        let empty = encode(&model, Array2::zeros((0, 2)).view(), 50).unwrap();
        assert!(empty.is_empty());
        assert_eq!(decode(&model, &empty).unwrap().nrows(), 0);
        let x = array![[0.5, 0.5], [1.0, -1.0]];
        let a = encode(&model, x.view(), 50).unwrap();
        let b = encode(&model, x.view(), 50).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source_domain_tag, "cr");
        assert_eq!(a.schedule_hash, model.schedule.hash());
    }

    #[test]
    fn zero_latent_decodes_deterministically() {
        let model = DenoiserModel::init(MlpArch::points(2), linear(), "pr", vec![2], 4).unwrap();
        let z = LatentBatch {
            latents: Array2::zeros((1, 2)),
            source_domain_tag: "x".into(),
            schedule_hash: model.schedule.hash(),
            data_shape: vec![2],
            plan: IntegrationPlan::encoding(1000, 40).unwrap(),
        };
        assert_eq!(decode(&model, &z).unwrap(), decode(&model, &z).unwrap());
    }

    #[test]
    fn decode_checks_shape() {
        let model = DenoiserModel::zero(linear(), "z", 2).unwrap();
        let z = LatentBatch {
            latents: Array2::zeros((1, 3)),
            source_domain_tag: "x".into(),
            schedule_hash: String::new(),
            data_shape: vec![3],
            plan: IntegrationPlan::encoding(1000, 10).unwrap(),
        };
        assert!(matches!(decode(&model, &z), Err(Error::Shape { .. })));
    }
}
