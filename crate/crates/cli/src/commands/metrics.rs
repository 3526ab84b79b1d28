use std::path::{Path, PathBuf};

use decdm::io::read_gray;
use decdm::metrics::{format_db, MetricReport, METRICS_CSV_HEADER};
use decdm::{Error, Result};
use serde::{Deserialize, Serialize};

use super::{list_images, write_file, Ctx};
use crate::config::{required, resolve};
use crate::manifest;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Ground-truth image, or a directory of them.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<PathBuf>,

    /// Image (or directory) to score; directories are paired by file name.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<PathBuf>,

    /// Metrics CSV.
    #[arg(long, short = 'o')]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub reference: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn pairs(reference: &Path, test: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if reference.is_dir() != test.is_dir() {
        return Err(Error::Config(
            "reference and test must both be files or both be directories".into(),
        ));
    }
    if !reference.is_dir() {
        let name = test
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        return Ok(vec![(name, reference.to_path_buf(), test.to_path_buf())]);
    }
    let mut out = Vec::new();
    for file in list_images(reference)? {
        let name = file.file_name().unwrap_or_default();
        let other = test.join(name);
        if !other.is_file() {
            return Err(Error::Config(format!(
                "{} has no counterpart in {}",
                file.display(),
                test.display()
            )));
        }
        out.push((name.to_string_lossy().into_owned(), file.clone(), other));
    }
    if out.is_empty() {
        return Err(Error::Config(format!(
            "no images in {}",
            reference.display()
        )));
    }
    Ok(out)
}

/// One row per pair, then a `mean` row when there is more than one pair.
pub fn metrics_csv(reports: &[MetricReport]) -> String {
    let mut out = format!("{METRICS_CSV_HEADER}\n");
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    if reports.len() > 1 {
        let n = reports.len() as f64;
        let psnr = reports.iter().map(|r| r.psnr_db).sum::<f64>() / n;
        let ssim = reports.iter().map(|r| r.ssim).sum::<f64>() / n;
        out.push_str(&format!("mean,{},{ssim}\n", format_db(psnr)));
    }
    out
}

pub fn run(ctx: &Ctx, args: &Args) -> Result<()> {
    let mut cfg: Config = resolve("metrics", &ctx.file, args)?;
    let reference = required(&cfg.reference, "reference")?;
    let test = required(&cfg.test, "test")?;
    let out = ctx.output(&required(&cfg.out, "out")?);
    cfg.out = Some(out.clone());

    let reports = pairs(&reference, &test)?
        .into_iter()
        .map(|(name, r, t)| {
            MetricReport::evaluate(
                name,
                &read_gray(&r)?,
                &read_gray(&t)?,
                r.display().to_string(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let csv = metrics_csv(&reports);
    write_file(&out, csv.as_bytes())?;
    print!("{csv}");
    manifest::write("metrics", &cfg, &[&reference, &test], vec![out])?;
    Ok(())
}
