use std::path::PathBuf;

use decdm::ddim::DEFAULT_STEPS;
use decdm::io::{read_gray, read_samples, samples_to_csv, write_gray};
use decdm::translate::{cycle_check, translate_images, translate_with_plan, DomainPair};
use decdm::{Error, IntegrationPlan, Result};
use serde::{Deserialize, Serialize};

use super::{
    create_dir, is_image, list_images, load_model, read_images, with_suffix, write_file, Ctx,
};
use crate::config::{required, resolve};
use crate::manifest;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    source_model: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    target_model: Option<PathBuf>,

    /// Samples CSV, one image, or a directory of images.
    #[arg(long, short = 'i')]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,

    /// Same kind as the input: CSV, image, or directory.
    #[arg(long, short = 'o')]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,

    /// DDIM steps each way (default: min(200, t_end)).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,

    /// Latent timestep; defaults to T.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<usize>,

    /// Slide-window stride for images larger than the model's patch.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,

    /// Also write `<out>.cycle.csv` (CSV input only).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    cycle: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub source_model: Option<PathBuf>,
    pub target_model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub steps: Option<usize>,
    pub t_end: Option<usize>,
    pub stride: Option<usize>,
    pub cycle: bool,
}

pub fn plan_for(
    pair: &DomainPair,
    steps: Option<usize>,
    t_end: Option<usize>,
) -> Result<IntegrationPlan> {
    let t_end = t_end.unwrap_or(pair.timesteps());
    if t_end == 0 || t_end > pair.timesteps() {
        return Err(Error::Config(format!(
            "t_end must be in 1..={}",
            pair.timesteps()
        )));
    }
    IntegrationPlan::new(0, t_end, steps.unwrap_or(DEFAULT_STEPS.min(t_end)))
}

pub fn run(ctx: &Ctx, args: &Args) -> Result<()> {
    let mut cfg: Config = resolve("translate", &ctx.file, args)?;
    let source_path = required(&cfg.source_model, "source_model")?;
    let target_path = required(&cfg.target_model, "target_model")?;
    let input = required(&cfg.input, "input")?;
    let out = ctx.output(&required(&cfg.out, "out")?);
    cfg.out = Some(out.clone());

    let pair = DomainPair::new(load_model(&source_path)?, load_model(&target_path)?)?;
    let plan = plan_for(&pair, cfg.steps, cfg.t_end)?;
    cfg.steps = Some(plan.n_steps());
    cfg.t_end = Some(plan.t_end());
    let mut outputs = vec![out.clone()];

    if input.is_dir() || is_image(&input) {
        if cfg.cycle {
            return Err(Error::Config("--cycle needs a samples CSV input".into()));
        }
        let stride = match (cfg.stride, pair.source.data_shape.as_slice()) {
            (Some(s), _) => s,
            (None, [h, _]) => (*h / 4).max(1),
            (None, shape) => {
                return Err(Error::Config(format!(
                    "model with data shape {shape:?} cannot translate images"
                )))
            }
        };
        cfg.stride = Some(stride);
        if input.is_dir() {
            let files = list_images(&input)?;
            let images = read_images(&files)?;
            let translated = translate_images(&images, &pair, (stride, stride), plan)?;
            create_dir(&out)?;
            for (file, img) in files.iter().zip(&translated) {
                write_gray(&out.join(file.file_name().unwrap_or_default()), img)?;
            }
        } else {
            let img = read_gray(&input)?;
            let translated =
                translate_images(std::slice::from_ref(&img), &pair, (stride, stride), plan)?;
            write_gray(&out, &translated[0])?;
        }
    } else {
        let samples = read_samples(&input)?;
        let y = translate_with_plan(samples.data.view(), &pair, plan)?;
        write_file(
            &out,
            samples_to_csv(y.view(), samples.labels.as_deref()).as_bytes(),
        )?;
        if cfg.cycle {
            let report = cycle_check(
                samples.data.view(),
                &pair,
                cfg.steps.unwrap_or(DEFAULT_STEPS),
            )?;
            let path = with_suffix(&out, ".cycle.csv");
            write_file(&path, report.to_csv().as_bytes())?;
            eprintln!(
                "cycle: mean latent L2 {:.5}, mean source L2 {:.5}",
                report.mean_latent_l2, report.mean_source_l2
            );
            outputs.push(path);
        }
    }
    manifest::write(
        "translate",
        &cfg,
        &[&source_path, &target_path, &input],
        outputs,
    )?;
    Ok(())
}
