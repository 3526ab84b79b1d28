use std::path::PathBuf;

use decdm::ddim::DEFAULT_STEPS;
use decdm::translate::party::{party_decode, party_encode, AuditedIo, EncodeJob, PartyRole, Role};
use decdm::Result;
use serde::{Deserialize, Serialize};

use super::{ensure_parent, with_suffix, write_file, Ctx};
use crate::config::{required, resolve};
use crate::manifest;

#[derive(Debug, clap::Subcommand)]
pub enum PartyCommand {
    /// Party A: samples + source model -> latent file.
    Encode(EncodeArgs),
    /// Party B: latent file + target model -> translated samples.
    Decode(DecodeArgs),
}

#[derive(Debug, clap::Args, Serialize)]
pub struct EncodeArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<PathBuf>,

    /// Latent file to send to party B.
    #[arg(long, short = 'o')]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<usize>,

    /// Defaults to `<out>.audit.tsv`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    audit_log: Option<PathBuf>,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct DecodeArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    latent: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<PathBuf>,

    /// Translated samples CSV to return to party A.
    #[arg(long, short = 'o')]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,

    /// Defaults to `<out>.audit.tsv`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    audit_log: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub samples: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub steps: usize,
    pub t_end: Option<usize>,
    pub audit_log: Option<PathBuf>,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            samples: None,
            model: None,
            out: None,
            steps: DEFAULT_STEPS,
            t_end: None,
            audit_log: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub latent: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, cmd: &PartyCommand) -> Result<()> {
    match cmd {
        PartyCommand::Encode(a) => encode(ctx, a),
        PartyCommand::Decode(a) => decode(ctx, a),
    }
}

fn encode(ctx: &Ctx, args: &EncodeArgs) -> Result<()> {
    let mut cfg: EncodeConfig = resolve("party-encode", &ctx.file, args)?;
    let samples = required(&cfg.samples, "samples")?;
    let model = required(&cfg.model, "model")?;
    let out = ctx.output(&required(&cfg.out, "out")?);
    let audit = ctx.output(
        &cfg.audit_log
            .clone()
            .unwrap_or_else(|| with_suffix(&out, ".audit.tsv")),
    );
    cfg.out = Some(out.clone());
    cfg.audit_log = Some(audit.clone());

    let mut io = AuditedIo::new(PartyRole {
        role: Role::EncoderA,
        allowed_inputs: vec![samples.clone(), model.clone()],
    });
    let job = EncodeJob {
        samples: samples.clone(),
        model: model.clone(),
        output: out.clone(),
        n_steps: cfg.steps,
        t_end: cfg.t_end,
    };
    ensure_parent(&out)?;
    let result = party_encode(&mut io, &job);
    write_file(&audit, io.log_text().as_bytes())?;
    let batch = result?;
    eprintln!("encoded {} samples to {}", batch.len(), out.display());
    manifest::write("party-encode", &cfg, &[&samples, &model], vec![out, audit])?;
    Ok(())
}

fn decode(ctx: &Ctx, args: &DecodeArgs) -> Result<()> {
    let mut cfg: DecodeConfig = resolve("party-decode", &ctx.file, args)?;
    let latent = required(&cfg.latent, "latent")?;
    let model = required(&cfg.model, "model")?;
    let out = ctx.output(&required(&cfg.out, "out")?);
    let audit = ctx.output(
        &cfg.audit_log
            .clone()
            .unwrap_or_else(|| with_suffix(&out, ".audit.tsv")),
    );
    cfg.out = Some(out.clone());
    cfg.audit_log = Some(audit.clone());

    let mut io = AuditedIo::new(PartyRole {
        role: Role::DecoderB,
        allowed_inputs: vec![latent.clone(), model.clone()],
    });
    ensure_parent(&out)?;
    let result = party_decode(&mut io, &latent, &model, &out);
    write_file(&audit, io.log_text().as_bytes())?;
    let decoded = result?;
    eprintln!("decoded {} samples to {}", decoded.nrows(), out.display());
    manifest::write("party-decode", &cfg, &[&latent, &model], vec![out, audit])?;
    Ok(())
}
