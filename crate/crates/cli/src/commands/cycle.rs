use std::path::{Path, PathBuf};

use decdm::ddim::DEFAULT_STEPS;
use decdm::io::{read_samples, scatter_png};
use decdm::translate::{cycle_trace, DomainPair};
use decdm::{make_schedule, DenoiserModel, Error, Result, ScheduleKind};
use serde::{Deserialize, Serialize};

use super::{create_dir, load_model, write_file, Ctx};
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

    /// Samples CSV; a `label` column colors the plots.
    #[arg(long, short = 'i')]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,

    /// Receives cycle.csv and four scatter plots.
    #[arg(long, short = 'o')]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,

    /// Replace both models by eps = 0 (no checkpoints needed).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    stub_eps0: Option<bool>,

    /// Stub mode only.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    timesteps: Option<usize>,

    /// Stub mode only: linear or cosine.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<String>,

    /// Half-width of the plotted square.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    extent: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub source_model: Option<PathBuf>,
    pub target_model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub steps: usize,
    pub stub_eps0: bool,
    pub timesteps: usize,
    pub schedule: String,
    pub extent: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            source_model: None,
            target_model: None,
            input: None,
            out: None,
            steps: DEFAULT_STEPS,
            stub_eps0: false,
            timesteps: 1000,
            schedule: "linear".into(),
            extent: 3.0,
        }
    }
}

pub const PLOTS: [&str; 4] = [
    "source.png",
    "latent.png",
    "target.png",
    "reconstructed.png",
];

pub fn run(ctx: &Ctx, args: &Args) -> Result<()> {
    let mut cfg: Config = resolve("cycle", &ctx.file, args)?;
    let input = required(&cfg.input, "input")?;
    let out = ctx.output(&required(&cfg.out, "out")?);
    cfg.out = Some(out.clone());
    let samples = read_samples(&input)?;
    let dim = samples.data.ncols();

    let mut inputs: Vec<&Path> = vec![&input];
    let pair = if cfg.stub_eps0 {
        let schedule = make_schedule(cfg.timesteps, cfg.schedule.parse::<ScheduleKind>()?)?;
        DomainPair::new(
            DenoiserModel::zero(schedule.clone(), "stub-source", dim)?,
            DenoiserModel::zero(schedule, "stub-target", dim)?,
        )?
    } else {
        let (Some(s), Some(t)) = (&cfg.source_model, &cfg.target_model) else {
            return Err(Error::Config(
                "cycle needs source_model and target_model, or --stub-eps0".into(),
            ));
        };
        inputs.push(s);
        inputs.push(t);
        DomainPair::new(load_model(s)?, load_model(t)?)?
    };

    let (report, trace) = cycle_trace(samples.data.view(), &pair, cfg.steps)?;
    create_dir(&out)?;
    let csv_path = out.join("cycle.csv");
    write_file(&csv_path, report.to_csv().as_bytes())?;
    let mut outputs = vec![out.clone(), csv_path];
    if dim == 2 {
        let labels = samples
            .labels
            .clone()
            .unwrap_or_else(|| vec![0; samples.data.nrows()]);
        let batches = [
            &samples.data,
            &trace.latent,
            &trace.translated,
            &trace.reconstructed,
        ];
        for (name, batch) in PLOTS.iter().zip(batches) {
            let path = out.join(name);
            scatter_png(&path, batch.view(), &labels, cfg.extent, 512)?;
            outputs.push(path);
        }
    }
    println!(
        "{} -> {} -> {}: mean latent L2 {:.6}, mean source L2 {:.6}",
        report.source_domain,
        report.target_domain,
        report.source_domain,
        report.mean_latent_l2,
        report.mean_source_l2
    );
    manifest::write("cycle", &cfg, &inputs, outputs)?;
    Ok(())
}
