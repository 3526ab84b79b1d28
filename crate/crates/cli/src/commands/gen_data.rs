use std::path::{Path, PathBuf};

use decdm::io::{point_set_to_csv, write_gray};
use decdm::patches::patch_file_name;
use decdm::synth::{degrade, render_strokes, DegradeConfig};
use decdm::{make_dataset, Domain, Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{create_dir, write_file, Ctx};
use crate::config::{required, resolve};
use crate::manifest;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// tm, cb, cr, cs, pr, ps, or doc.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<String>,

    #[arg(long, visible_alias = "n")]
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,

    /// CSV file for point domains, directory for `doc`.
    #[arg(long, short = 'o')]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,

    /// `doc` only: e.g. `gaussian:5,speckle:5` on the 0-255 scale.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<String>,

    /// `doc` only: image side length.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    size: Option<usize>,

    /// `doc` only: fraction of dark pixels.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    density: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub kind: Option<String>,
    pub count: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub noise: String,
    pub size: usize,
    pub density: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            kind: None,
            count: 4096,
            seed: 0,
            out: None,
            noise: String::new(),
            size: 16,
            density: 0.06,
        }
    }
}

/// Parses `gaussian:5,speckle:5`; either part may be omitted.
pub fn parse_noise(spec: &str) -> Result<(f64, f64)> {
    let (mut gaussian, mut speckle) = (0.0, 0.0);
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part.split_once(':').ok_or_else(|| {
            Error::Config(format!("noise term '{part}' should look like gaussian:5"))
        })?;
        let value: f64 = value
            .parse()
            .map_err(|_| Error::Config(format!("bad noise level in '{part}'")))?;
        match name {
            "gaussian" => gaussian = value,
            "speckle" => speckle = value,
            other => return Err(Error::Config(format!("unknown noise kind '{other}'"))),
        }
    }
    Ok((gaussian, speckle))
}

pub fn run(ctx: &Ctx, args: &Args) -> Result<()> {
    let mut cfg: Config = resolve("gen-data", &ctx.file, args)?;
    let kind = required(&cfg.kind, "kind")?;
    let out = ctx.output(&required(&cfg.out, "out")?);
    cfg.out = Some(out.clone());
    if kind.eq_ignore_ascii_case("doc") {
        let outputs = write_doc(&cfg, &out)?;
        manifest::write("gen-data", &cfg, &[], outputs)?;
        return Ok(());
    }
    if !cfg.noise.is_empty() {
        return Err(Error::Config("--noise only applies to --kind doc".into()));
    }
    let domain: Domain = kind.parse()?;
    let set = make_dataset(domain, cfg.count, cfg.seed)?;
    write_file(&out, point_set_to_csv(&set).as_bytes())?;
    manifest::write("gen-data", &cfg, &[], vec![out])?;
    Ok(())
}

/// `out/clean/` always, `out/noisy/` when a noise spec is given. Pairs share
/// file names.
fn write_doc(cfg: &Config, out: &Path) -> Result<Vec<PathBuf>> {
    let (gaussian, speckle) = parse_noise(&cfg.noise)?;
    let noisy = !cfg.noise.trim().is_empty();
    let clean_dir = out.join("clean");
    let noisy_dir = out.join("noisy");
    create_dir(&clean_dir)?;
    if noisy {
        create_dir(&noisy_dir)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..cfg.count {
        let (page_seed, noise_seed) = (rng.next_u64(), rng.next_u64());
        let clean = render_strokes(page_seed, cfg.size, cfg.size, cfg.density)?;
        let name = patch_file_name(i);
        write_gray(&clean_dir.join(&name), &clean)?;
        if noisy {
            let degraded = degrade(
                &clean,
                &DegradeConfig {
                    gaussian_sigma: gaussian,
                    speckle_sigma: speckle,
                    seed: noise_seed,
                },
            )?;
            write_gray(&noisy_dir.join(&name), &degraded)?;
        }
    }
    let mut outputs = vec![out.to_path_buf(), clean_dir];
    if noisy {
        outputs.push(noisy_dir);
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_specs() {
        assert_eq!(parse_noise("gaussian:5,speckle:5").unwrap(), (5.0, 5.0));
        assert_eq!(parse_noise("speckle:2.5").unwrap(), (0.0, 2.5));
        assert_eq!(parse_noise("").unwrap(), (0.0, 0.0));
        assert!(parse_noise("salt:3").is_err());
        assert!(parse_noise("gaussian").is_err());
        assert!(parse_noise("gaussian:x").is_err());
    }
}
