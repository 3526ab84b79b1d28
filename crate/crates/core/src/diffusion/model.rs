use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nn::{assemble_input, time_embedding, Mlp, MlpArch};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

/// Anything that predicts the injected noise `eps(x_t, t)` under a schedule.
pub trait EpsPredictor: Sync {
    fn schedule(&self) -> &NoiseSchedule;

    /// Flattened sample dimension.
    fn data_dim(&self) -> usize;

    /// Predicts noise for every row of `x` at the same (possibly fractional) time.
    fn predict_eps(&self, x: ArrayView2<f64>, t: f64) -> Array2<f64>;
}

/// A trained (or freshly initialized) noise predictor for one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    pub arch: MlpArch,
    pub params: Vec<f64>,
    pub schedule: NoiseSchedule,
    pub domain_tag: String,
    /// Shape of one sample, e.g. `[2]` for points or `[16, 16]` for patches.
    pub data_shape: Vec<usize>,
}

impl DenoiserModel {
    pub fn new(
        arch: MlpArch,
        params: Vec<f64>,
        schedule: NoiseSchedule,
        domain_tag: impl Into<String>,
        data_shape: Vec<usize>,
    ) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::Shape {
                expected: vec![arch.param_count()],
                found: vec![params.len()],
            });
        }
        let flat: usize = data_shape.iter().product();
        if data_shape.is_empty() || flat != arch.data_dim {
            return Err(Error::Shape {
                expected: vec![arch.data_dim],
                found: data_shape,
            });
        }
        Ok(Self {
            arch,
            params,
            schedule,
            domain_tag: domain_tag.into(),
            data_shape,
        })
    }

    /// Seeded fan-in uniform initialization.
    pub fn init(
        arch: MlpArch,
        schedule: NoiseSchedule,
        domain_tag: impl Into<String>,
        data_shape: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = arch.init_params(&mut rng);
        Self::new(arch, params, schedule, domain_tag, data_shape)
    }

    /// A model whose prediction is exactly `value` everywhere: the output
    /// layer weights are zero and its bias is `value`.
    pub fn constant(
        arch: MlpArch,
        schedule: NoiseSchedule,
        domain_tag: impl Into<String>,
        data_shape: Vec<usize>,
        value: &[f64],
    ) -> Result<Self> {
        let mut model = Self::init(arch, schedule, domain_tag, data_shape, 0)?;
        if value.len() != model.arch.data_dim {
            return Err(Error::Shape {
                expected: vec![model.arch.data_dim],
                found: vec![value.len()],
            });
        }
        let (fan_in, fan_out) = *model.arch.layer_dims().last().unwrap();
        let n = model.params.len();
        let w_start = n - fan_in * fan_out - fan_out;
        model.params[w_start..n - fan_out].fill(0.0);
        model.params[n - fan_out..].copy_from_slice(value);
        Ok(model)
    }

    /// The `eps = 0` stub: DDIM steps reduce to pure rescaling.
    pub fn zero(
        schedule: NoiseSchedule,
        domain_tag: impl Into<String>,
        data_dim: usize,
    ) -> Result<Self> {
        let arch = MlpArch::new(data_dim, 4, vec![4])?;
        Self::constant(
            arch,
            schedule,
            domain_tag,
            vec![data_dim],
            &vec![0.0; data_dim],
        )
    }

    pub fn data_dim(&self) -> usize {
        self.arch.data_dim
    }

    /// Score estimate `-eps / sqrt(1 - alpha_t)` at an integer timestep `t >= 1`.
    pub fn score(&self, x: ArrayView2<f64>, t: usize) -> Array2<f64> {
        let scale = -1.0 / (1.0 - self.schedule.alpha(t)).sqrt();
        self.predict_eps(x, t as f64) * scale
    }

    pub(crate) fn net(&self) -> Mlp<'_> {
        Mlp::new(&self.arch, &self.params)
    }

    /// All parameters and schedule values are exactly representable in f32.
    pub fn is_f32_exact(&self) -> bool {
        self.params
            .iter()
            .chain(self.schedule.alphas_cum())
            .all(|v| (*v as f32 as f64) == *v)
    }
}

impl EpsPredictor for DenoiserModel {
    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn data_dim(&self) -> usize {
        self.arch.data_dim
    }

    fn predict_eps(&self, x: ArrayView2<f64>, t: f64) -> Array2<f64> {
        let emb = [Array1::from(time_embedding(t, self.arch.time_embed_dim))];
        let input = assemble_input(x, &emb, |_| 0);
        self.net().forward(input.view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{make_schedule, ScheduleKind};
    use ndarray::array;

    fn schedule() -> NoiseSchedule {
        make_schedule(100, ScheduleKind::LinearBeta).unwrap()
    }

    #[test]
    fn fresh_model_is_finite_and_pure() {
        let m = DenoiserModel::init(MlpArch::points(2), schedule(), "tm", vec![2], 3).unwrap();
        let x = array![[0.1, -0.4], [3.0, 2.0], [-10.0, 0.0]];
        let a = m.predict_eps(x.view(), 37.5);
        let b = m.predict_eps(x.view(), 37.5);
        assert_eq!(a.dim(), (3, 2));
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a, b);
        assert!(m.is_f32_exact());
    }

    #[test]
    fn constant_model_predicts_constant() {
        let arch = MlpArch::new(2, 8, vec![6, 6]).unwrap();
        let m = DenoiserModel::constant(arch, schedule(), "c", vec![2], &[0.0, 1.0]).unwrap();
        let x = array![[5.0, -3.0], [0.0, 0.0]];
        let eps = m.predict_eps(x.view(), 12.0);
        assert_eq!(eps, array![[0.0, 1.0], [0.0, 1.0]]);
        let z = DenoiserModel::zero(schedule(), "z", 2).unwrap();
        assert!(z.predict_eps(x.view(), 99.0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_must_match_arch() {
        let err = DenoiserModel::init(MlpArch::points(2), schedule(), "x", vec![3], 0);
        assert!(matches!(err, Err(Error::Shape { .. })));
        assert!(DenoiserModel::init(MlpArch::patches(64), schedule(), "x", vec![8, 8], 0).is_ok());
    }
}
