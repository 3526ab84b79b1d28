//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! b"DECD" | version: u16 | header_len: u32 | header: UTF-8 JSON
//!        | alphas_cum: f32 x (T + 1) | params: f32 x param_count
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::DenoiserModel;
use super::nn::MlpArch;
use super::schedule::{NoiseSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::io::framing::{read_f32s, read_preamble, write_preamble};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DECD";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    domain_tag: String,
    arch: MlpArch,
    timesteps: usize,
    schedule_kind: ScheduleKind,
    data_shape: Vec<usize>,
    schedule_hash: String,
    param_count: usize,
}

pub fn write_checkpoint(model: &DenoiserModel) -> Result<Vec<u8>> {
    if !model.is_f32_exact() {
        return Err(Error::format(
            "model values are not f32-representable; checkpoint would not round-trip",
        ));
    }
    let header = Header {
        domain_tag: model.domain_tag.clone(),
        arch: model.arch.clone(),
        timesteps: model.schedule.timesteps(),
        schedule_kind: model.schedule.kind(),
        data_shape: model.data_shape.clone(),
        schedule_hash: model.schedule.hash(),
        param_count: model.params.len(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::format(e.to_string()))?;
    let floats = model.schedule.alphas_cum().len() + model.params.len();
    let mut out = write_preamble(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &header, floats);
    for v in model.schedule.alphas_cum().iter().chain(&model.params) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<DenoiserModel> {
    let (header, payload) = read_preamble(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let header: Header = serde_json::from_slice(header)
        .map_err(|e| Error::format(format!("bad checkpoint header: {e}")))?;
    if header.param_count != header.arch.param_count() {
        return Err(Error::format(format!(
            "header declares {} params but the architecture has {}",
            header.param_count,
            header.arch.param_count()
        )));
    }
    let mut values = read_f32s(payload, header.timesteps + 1 + header.param_count)?;
    let params = values.split_off(header.timesteps + 1);
    let schedule = NoiseSchedule::from_alphas(values, header.schedule_kind)
        .map_err(|e| Error::format(format!("bad schedule in checkpoint: {e}")))?;
    if schedule.hash() != header.schedule_hash {
        return Err(Error::ScheduleMismatch {
            expected: header.schedule_hash,
            found: schedule.hash(),
        });
    }
    DenoiserModel::new(
        header.arch,
        params,
        schedule,
        header.domain_tag,
        header.data_shape,
    )
}

pub fn save_checkpoint(model: &DenoiserModel, path: &Path) -> Result<()> {
    let bytes = write_checkpoint(model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<DenoiserModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
