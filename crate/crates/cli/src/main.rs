//! `decdm`: dataset generation, per-domain training, translation, cycle
//! checks, the two-party latent exchange, and image metrics.
//!
//! Exit codes: 0 success, 2 configuration or I/O error, 3 numeric or
//! training failure, 4 format, protocol, or privacy error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use decdm::Error;

use crate::commands::Ctx;
use crate::config::ConfigFile;

#[derive(Debug, Parser)]
#[command(
    name = "decdm",
    version,
    about = "Unpaired translation with two independently trained diffusion models"
)]
struct Cli {
    /// TOML file with one table per command, e.g. `[train]`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, env = "DECDM_OUT_DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a 2D point domain (CSV) or clean/noisy stroke images.
    GenData(commands::gen_data::Args),
    /// Train one domain's noise-prediction model.
    Train(commands::train::Args),
    /// Translate samples or images from the source to the target domain.
    Translate(commands::translate::Args),
    /// Source -> target -> source cycle distances and scatter plots.
    Cycle(commands::cycle::Args),
    /// The two-party protocol: `encode` (party A) and `decode` (party B).
    #[command(subcommand)]
    Party(commands::party::PartyCommand),
    /// PSNR and SSIM between reference and test images.
    Metrics(commands::metrics::Args),
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Io { .. } => 2,
        Error::Numeric(_) | Error::Divergence { .. } => 3,
        Error::Format(_)
        | Error::LengthMismatch { .. }
        | Error::ScheduleMismatch { .. }
        | Error::Role(_)
        | Error::Privacy { .. }
        | Error::Shape { .. } => 4,
        Error::Internal(_) => 1,
    }
}

fn run(cli: Cli) -> decdm::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let ctx = Ctx {
        file: ConfigFile::load(cli.config.as_deref())?,
        out_dir: cli.out_dir,
    };
    if let Some(dir) = &ctx.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
    }
    match cli.command {
        Command::GenData(a) => commands::gen_data::run(&ctx, &a),
        Command::Train(a) => commands::train::run(&ctx, &a),
        Command::Translate(a) => commands::translate::run(&ctx, &a),
        Command::Cycle(a) => commands::cycle::run(&ctx, &a),
        Command::Party(p) => commands::party::run(&ctx, &p),
        Command::Metrics(a) => commands::metrics::run(&ctx, &a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("decdm: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
