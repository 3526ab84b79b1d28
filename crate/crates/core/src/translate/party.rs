//! The two-party protocol: party A holds source data and the source model,
//! party B holds the target model. Only the latent file and the translated
//! samples cross between them.
//!
//! Every file access goes through [`AuditedIo`], which refuses reads outside
//! the party's declared inputs and records everything it touches.

use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ddim::{
    decode, encode_with_plan, read_latent_file, write_latent_file, IntegrationPlan, LatentBatch,
};
use crate::diffusion::{read_checkpoint, DenoiserModel};
use crate::error::{Error, Result};
use crate::io::{samples_from_csv, samples_to_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// Holds source data; sends latents.
    EncoderA,
    /// Holds the target model; returns translations.
    DecoderB,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::EncoderA => "encoder-a",
            Role::DecoderB => "decoder-b",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyRole {
    pub role: Role,
    pub allowed_inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Read,
    Write,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub role: Role,
    pub access: Access,
    pub path: PathBuf,
}

/// Absolute, symlink-resolved where the file exists.
fn normalize(path: &Path) -> PathBuf {
    path.canonicalize()
        .or_else(|_| std::path::absolute(path))
        .unwrap_or_else(|_| path.to_path_buf())
}

/// File access for one party, limited to its declared inputs.
#[derive(Debug)]
pub struct AuditedIo {
    role: Role,
    allowed: Vec<PathBuf>,
    log: Vec<AuditEntry>,
}

impl AuditedIo {
    pub fn new(party: PartyRole) -> Self {
        Self {
            role: party.role,
            allowed: party.allowed_inputs.iter().map(|p| normalize(p)).collect(),
            log: Vec::new(),
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let full = normalize(path);
        if !self.allowed.contains(&full) {
            self.record(Access::Denied, full.clone());
            return Err(Error::Privacy {
                role: self.role.to_string(),
                path: full,
            });
        }
        self.record(Access::Read, full);
        std::fs::read(path).map_err(|e| Error::io(path, e))
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        self.record(Access::Write, normalize(path));
        Ok(())
    }

    fn record(&mut self, access: Access, path: PathBuf) {
        self.log.push(AuditEntry {
            role: self.role,
            access,
            path,
        });
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.log
    }

    pub fn reads(&self) -> impl Iterator<Item = &Path> {
        self.log
            .iter()
            .filter(|e| e.access == Access::Read)
            .map(|e| e.path.as_path())
    }

    /// One `role<TAB>access<TAB>path` line per entry.
    pub fn log_text(&self) -> String {
        self.log
            .iter()
            .map(|e| {
                let access = match e.access {
                    Access::Read => "read",
                    Access::Write => "write",
                    Access::Denied => "denied",
                };
                format!("{}\t{access}\t{}\n", e.role, e.path.display())
            })
            .collect()
    }
}

fn require(io: &AuditedIo, role: Role) -> Result<()> {
    if io.role() != role {
        return Err(Error::Role(format!(
            "this step belongs to {role}, not {}",
            io.role()
        )));
    }
    Ok(())
}

fn load_model(io: &mut AuditedIo, path: &Path) -> Result<DenoiserModel> {
    read_checkpoint(&io.read(path)?)
}

#[derive(Debug, Clone)]
pub struct EncodeJob {
    /// Samples CSV, one flattened sample per row.
    pub samples: PathBuf,
    pub model: PathBuf,
    pub output: PathBuf,
    pub n_steps: usize,
    /// Latent depth; `T` when absent.
    pub t_end: Option<usize>,
}

/// Party A: encode local samples and write the latent file to send.
pub fn party_encode(io: &mut AuditedIo, job: &EncodeJob) -> Result<LatentBatch> {
    require(io, Role::EncoderA)?;
    let model = load_model(io, &job.model)?;
    let text = String::from_utf8(io.read(&job.samples)?)
        .map_err(|e| Error::format(format!("{}: {e}", job.samples.display())))?;
    let samples = samples_from_csv(&text)?;
    let t_end = job.t_end.unwrap_or(model.schedule.timesteps());
    let plan = IntegrationPlan::new(0, t_end, job.n_steps)?;
    let batch = encode_with_plan(&model, samples.data.view(), plan)?.quantized();
    io.write(&job.output, &write_latent_file(&batch)?)?;
    Ok(batch)
}

/// Party B: decode a received latent file with the target model and write
/// the translated samples CSV to send back.
pub fn party_decode(
    io: &mut AuditedIo,
    latent: &Path,
    model: &Path,
    output: &Path,
) -> Result<Array2<f64>> {
    require(io, Role::DecoderB)?;
    let batch = read_latent_file(&io.read(latent)?)?;
    let model = load_model(io, model)?;
    if batch.schedule_hash != model.schedule.hash() {
        return Err(Error::ScheduleMismatch {
            expected: model.schedule.hash(),
            found: batch.schedule_hash,
        });
    }
    if batch.plan.t_end() > model.schedule.timesteps() {
        return Err(Error::format("latent plan runs past the target model's T"));
    }
    let out = if batch.is_empty() {
        Array2::zeros((0, model.data_dim()))
    } else {
        decode(&model, &batch)?
    };
    io.write(output, samples_to_csv(out.view(), None).as_bytes())?;
    Ok(out)
}
