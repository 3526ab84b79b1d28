//! Translation between two independently trained domains.
//!
//! A source sample is integrated forward to the shared latent with the source
//! model, then integrated back with the target model. Neither model ever
//! sees the other domain's data.

pub mod party;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::ddim::{decode, encode_with_plan, IntegrationPlan};
use crate::diffusion::{train, DenoiserModel, MlpArch, NoiseSchedule, TrainConfig, TrainLog};
use crate::error::{Error, Result};
use crate::metrics::row_distances;
use crate::patches::{slide_window, stitch};
use crate::synth::GrayPatch;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: DenoiserModel,
    pub target: DenoiserModel,
}

impl DomainPair {
    /// Both models must share a sample shape and the number of timesteps.
    pub fn new(source: DenoiserModel, target: DenoiserModel) -> Result<Self> {
        if source.data_shape != target.data_shape {
            return Err(Error::Shape {
                expected: source.data_shape.clone(),
                found: target.data_shape.clone(),
            });
        }
        if source.schedule.timesteps() != target.schedule.timesteps() {
            return Err(Error::config(format!(
                "source has T = {} but target has T = {}",
                source.schedule.timesteps(),
                target.schedule.timesteps()
            )));
        }
        Ok(Self { source, target })
    }

    /// The backward direction.
    pub fn swapped(&self) -> Self {
        Self {
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }

    pub fn timesteps(&self) -> usize {
        self.source.schedule.timesteps()
    }

    /// Full-depth plan from `0` to `T`.
    pub fn plan(&self, n_steps: usize) -> Result<IntegrationPlan> {
        IntegrationPlan::encoding(self.timesteps(), n_steps)
    }
}

/// Settings for [`train_pair`]. The target run uses `seed + 1` unless its
/// config is given explicitly.
#[derive(Debug, Clone)]
pub struct PairConfig {
    pub arch: MlpArch,
    pub schedule: NoiseSchedule,
    pub data_shape: Vec<usize>,
    pub source_tag: String,
    pub target_tag: String,
    pub source_cfg: TrainConfig,
    pub target_cfg: TrainConfig,
}

impl PairConfig {
    pub fn new(
        arch: MlpArch,
        schedule: NoiseSchedule,
        data_shape: Vec<usize>,
        tags: (&str, &str),
        base: TrainConfig,
    ) -> Self {
        let target_cfg = TrainConfig {
            seed: base.seed.wrapping_add(1),
            ..base.clone()
        };
        Self {
            arch,
            schedule,
            data_shape,
            source_tag: tags.0.to_string(),
            target_tag: tags.1.to_string(),
            source_cfg: base,
            target_cfg,
        }
    }
}

/// Two separate training runs; the datasets are never combined.
pub fn train_pair(
    source_data: ArrayView2<f64>,
    target_data: ArrayView2<f64>,
    cfg: &PairConfig,
) -> Result<(DomainPair, TrainLog, TrainLog)> {
    if source_data.ncols() != target_data.ncols() {
        return Err(Error::Shape {
            expected: vec![source_data.ncols()],
            found: vec![target_data.ncols()],
        });
    }
    let (source, source_log) = train(
        source_data,
        &cfg.arch,
        &cfg.source_cfg,
        &cfg.schedule,
        &cfg.source_tag,
        cfg.data_shape.clone(),
    )?;
    let (target, target_log) = train(
        target_data,
        &cfg.arch,
        &cfg.target_cfg,
        &cfg.schedule,
        &cfg.target_tag,
        cfg.data_shape.clone(),
    )?;
    Ok((DomainPair::new(source, target)?, source_log, target_log))
}

/// Source to target over a full-depth plan with `n_steps` steps.
pub fn translate(x: ArrayView2<f64>, pair: &DomainPair, n_steps: usize) -> Result<Array2<f64>> {
    translate_with_plan(x, pair, pair.plan(n_steps)?)
}

/// Source to target through the latent at `plan.t_end()`.
///
/// The latent is rounded to f32 between the two halves, exactly as it would
/// be after a trip through a latent file.
pub fn translate_with_plan(
    x: ArrayView2<f64>,
    pair: &DomainPair,
    plan: IntegrationPlan,
) -> Result<Array2<f64>> {
    let latent = encode_with_plan(&pair.source, x, plan)?.quantized();
    decode(&pair.target, &latent)
}

/// Translates an image of any size patch by patch and averages overlaps.
pub fn translate_image(
    image: &GrayPatch,
    pair: &DomainPair,
    stride: (usize, usize),
    plan: IntegrationPlan,
) -> Result<GrayPatch> {
    let mut out = translate_images(std::slice::from_ref(image), pair, stride, plan)?;
    Ok(out.remove(0))
}

/// [`translate_image`] for many images, with every patch in one batch.
pub fn translate_images(
    images: &[GrayPatch],
    pair: &DomainPair,
    stride: (usize, usize),
    plan: IntegrationPlan,
) -> Result<Vec<GrayPatch>> {
    let window = match pair.source.data_shape.as_slice() {
        [h, w] => (*h, *w),
        other => {
            return Err(Error::config(format!(
                "patch translation needs 2D models, got data shape {other:?}"
            )))
        }
    };
    let grids = images
        .iter()
        .map(|img| slide_window(img, window, stride))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<GrayPatch> = grids
        .iter()
        .flat_map(|g| g.patches.iter().cloned())
        .collect();
    let mut translated = translate_patches(&all, pair, plan)?.into_iter();
    grids
        .iter()
        .map(|g| stitch(&g.with_patches(translated.by_ref().take(g.len()).collect())?))
        .collect()
}

/// Translates equally sized patches in one batch.
pub fn translate_patches(
    patches: &[GrayPatch],
    pair: &DomainPair,
    plan: IntegrationPlan,
) -> Result<Vec<GrayPatch>> {
    let Some(first) = patches.first() else {
        return Ok(Vec::new());
    };
    let (h, w) = first.dims();
    let rows = patches_to_rows(patches)?;
    let out = translate_with_plan(rows.view(), pair, plan)?;
    out.rows()
        .into_iter()
        .map(|r| GrayPatch::from_model_space(h, w, &r.to_vec()))
        .collect()
}

/// Stacks patches as model-space rows.
pub fn patches_to_rows(patches: &[GrayPatch]) -> Result<Array2<f64>> {
    let Some(first) = patches.first() else {
        return Ok(Array2::zeros((0, 0)));
    };
    let (h, w) = first.dims();
    let mut values = Vec::with_capacity(patches.len() * h * w);
    for p in patches {
        if p.dims() != (h, w) {
            return Err(Error::Shape {
                expected: vec![h, w],
                found: vec![p.height, p.width],
            });
        }
        values.extend(p.to_model_space());
    }
    Array2::from_shape_vec((patches.len(), h * w), values)
        .map_err(|e| Error::Internal(e.to_string()))
}

/// Forward-then-backward cycle distances for one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub source_domain: String,
    pub target_domain: String,
    pub n_steps: usize,
    /// `|x_z - x~_z|`: source latent vs. the latent recovered from the target.
    pub per_sample_latent_l2: Vec<f64>,
    /// `|x_s - x~_s|`: input vs. its round trip through the target domain.
    pub per_sample_source_l2: Vec<f64>,
    pub mean_latent_l2: f64,
    pub mean_source_l2: f64,
}

impl CycleReport {
    /// `sample_id,latent_l2,source_l2` rows, then a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,latent_l2,source_l2\n");
        for (i, (l, s)) in self
            .per_sample_latent_l2
            .iter()
            .zip(&self.per_sample_source_l2)
            .enumerate()
        {
            out.push_str(&format!("{i},{l},{s}\n"));
        }
        out.push_str(&format!(
            "mean,{},{}\n",
            self.mean_latent_l2, self.mean_source_l2
        ));
        out
    }
}

/// Intermediate batches of one cycle, kept for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleTrace {
    pub latent: Array2<f64>,
    pub translated: Array2<f64>,
    pub latent_back: Array2<f64>,
    pub reconstructed: Array2<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs source -> latent -> target -> latent -> source in f64 throughout.
pub fn cycle_check(
    batch: ArrayView2<f64>,
    pair: &DomainPair,
    n_steps: usize,
) -> Result<CycleReport> {
    cycle_trace(batch, pair, n_steps).map(|(r, _)| r)
}

pub fn cycle_trace(
    batch: ArrayView2<f64>,
    pair: &DomainPair,
    n_steps: usize,
) -> Result<(CycleReport, CycleTrace)> {
    if batch.nrows() == 0 {
        return Err(Error::config("cycle check needs at least one sample"));
    }
    let plan = pair.plan(n_steps)?;
    let latent = encode_with_plan(&pair.source, batch, plan.clone())?;
    let translated = decode(&pair.target, &latent)?;
    let latent_back = encode_with_plan(&pair.target, translated.view(), plan)?;
    let reconstructed = decode(&pair.source, &latent_back)?;

    let latent_l2 = row_distances(latent.latents.view(), latent_back.latents.view())?;
    let source_l2 = row_distances(batch, reconstructed.view())?;
    let report = CycleReport {
        source_domain: pair.source.domain_tag.clone(),
        target_domain: pair.target.domain_tag.clone(),
        n_steps,
        mean_latent_l2: mean(&latent_l2),
        mean_source_l2: mean(&source_l2),
        per_sample_latent_l2: latent_l2,
        per_sample_source_l2: source_l2,
    };
    let trace = CycleTrace {
        latent: latent.latents,
        translated,
        latent_back: latent_back.latents,
        reconstructed,
    };
    Ok((report, trace))
}
