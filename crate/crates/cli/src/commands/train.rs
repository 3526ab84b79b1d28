use std::path::PathBuf;

use decdm::diffusion::save_checkpoint;
use decdm::io::read_samples;
use decdm::patches::slide_window;
use decdm::translate::patches_to_rows;
use decdm::{make_schedule, train, Error, GrayPatch, MlpArch, Result, ScheduleKind, TrainConfig};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{list_images, read_images, with_suffix, write_file, Ctx};
use crate::config::{required, resolve};
use crate::manifest;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Samples CSV, or a directory of grayscale images cut into patches.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,

    /// Checkpoint path; the loss curve goes to `<out>.loss.csv`.
    #[arg(long, short = 'o')]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,

    /// Defaults to the data file or directory name.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    domain_tag: Option<String>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    final_lr_fraction: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    log_every: Option<usize>,

    /// Hidden layer widths, e.g. `128,128,128`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden: Option<Vec<usize>>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    time_embed_dim: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    timesteps: Option<usize>,

    /// linear or cosine.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<String>,

    /// Patch side length for image directories.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,

    /// Slide-window stride for image directories.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub domain_tag: Option<String>,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub final_lr_fraction: f64,
    pub seed: u64,
    pub log_every: usize,
    /// Empty picks 3x128 for points and 3x512 for patches.
    pub hidden: Vec<usize>,
    pub time_embed_dim: usize,
    pub timesteps: usize,
    pub schedule: String,
    pub window: usize,
    pub stride: usize,
}

impl Default for Config {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            data: None,
            out: None,
            domain_tag: None,
            steps: t.steps,
            batch_size: t.batch_size,
            lr: t.lr,
            final_lr_fraction: t.final_lr_fraction,
            seed: t.seed,
            log_every: t.log_every,
            hidden: Vec::new(),
            time_embed_dim: 64,
            timesteps: 1000,
            schedule: "linear".into(),
            window: 16,
            stride: 4,
        }
    }
}

/// Rows of training data and the shape of one sample.
pub fn load_training_data(
    path: &std::path::Path,
    window: usize,
    stride: usize,
) -> Result<(Array2<f64>, Vec<usize>)> {
    if path.is_dir() {
        let images = read_images(&list_images(path)?)?;
        if images.is_empty() {
            return Err(Error::Config(format!(
                "no .png/.pgm images in {}",
                path.display()
            )));
        }
        let mut patches: Vec<GrayPatch> = Vec::new();
        for img in &images {
            patches.extend(slide_window(img, (window, window), (stride, stride))?.patches);
        }
        Ok((patches_to_rows(&patches)?, vec![window, window]))
    } else {
        let samples = read_samples(path)?;
        let dim = samples.data.ncols();
        Ok((samples.data, vec![dim]))
    }
}

pub fn run(ctx: &Ctx, args: &Args) -> Result<()> {
    let mut cfg: Config = resolve("train", &ctx.file, args)?;
    let data_path = required(&cfg.data, "data")?;
    let out = ctx.output(&required(&cfg.out, "out")?);
    cfg.out = Some(out.clone());
    let tag = match &cfg.domain_tag {
        Some(t) => t.clone(),
        None => data_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("domain")
            .to_string(),
    };
    cfg.domain_tag = Some(tag.clone());

    let (data, data_shape) = load_training_data(&data_path, cfg.window, cfg.stride)?;
    let dim = data.ncols();
    if cfg.hidden.is_empty() {
        cfg.hidden = if data_shape.len() == 1 {
            MlpArch::points(dim).hidden
        } else {
            MlpArch::patches(dim).hidden
        };
    }
    let arch = MlpArch::new(dim, cfg.time_embed_dim, cfg.hidden.clone())?;
    let kind: ScheduleKind = cfg.schedule.parse()?;
    let schedule = make_schedule(cfg.timesteps, kind)?;
    let train_cfg = TrainConfig {
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        final_lr_fraction: cfg.final_lr_fraction,
        seed: cfg.seed,
        log_every: cfg.log_every,
        ..TrainConfig::default()
    };
    eprintln!(
        "training '{tag}' on {} samples of shape {data_shape:?} for {} steps",
        data.nrows(),
        cfg.steps
    );
    let (model, log) = train(data.view(), &arch, &train_cfg, &schedule, &tag, data_shape)?;
    if let Some(last) = log.losses.last() {
        eprintln!("final loss {last:.5}");
    }
    super::ensure_parent(&out)?;
    save_checkpoint(&model, &out)?;
    let loss_path = with_suffix(&out, ".loss.csv");
    write_file(&loss_path, log.to_csv().as_bytes())?;
    manifest::write("train", &cfg, &[&data_path], vec![out, loss_path])?;
    Ok(())
}
