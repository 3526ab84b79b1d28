//! `magic | version: u16 | header_len: u32 | header | f32 payload`, little-endian.

use crate::error::{Error, Result};

/// Writes the preamble and header, reserving room for `floats` payload values.
pub(crate) fn write_preamble(
    magic: &[u8; 4],
    version: u16,
    header: &[u8],
    floats: usize,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(10 + header.len() + 4 * floats);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    out
}

/// Splits a framed file into `(header, payload)`.
pub(crate) fn read_preamble<'a>(
    bytes: &'a [u8],
    magic: &[u8; 4],
    version: u16,
) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 10 || &bytes[..4] != magic {
        return Err(Error::format(format!(
            "missing magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let found = u16::from_le_bytes([bytes[4], bytes[5]]);
    if found != version {
        return Err(Error::format(format!(
            "unsupported version {found}, expected {version}"
        )));
    }
    let len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let rest = &bytes[10..];
    if rest.len() < len {
        return Err(Error::LengthMismatch {
            expected: len,
            found: rest.len(),
        });
    }
    Ok(rest.split_at(len))
}

pub(crate) fn read_f32s(payload: &[u8], count: usize) -> Result<Vec<f64>> {
    if payload.len() != 4 * count {
        return Err(Error::LengthMismatch {
            expected: 4 * count,
            found: payload.len(),
        });
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}
