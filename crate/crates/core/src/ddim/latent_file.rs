//! The latent file is the only thing the encoding party sends out.
//!
//! ```text
//! b"DECZ" | version: u16 | header_len: u32 | header: UTF-8 JSON
//!        | latents: f32 x count x prod(data_shape)
//! ```

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{IntegrationPlan, LatentBatch};
use crate::error::{Error, Result};
use crate::io::framing::{read_f32s, read_preamble, write_preamble};

pub const LATENT_MAGIC: &[u8; 4] = b"DECZ";
pub const LATENT_VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    source_domain_tag: String,
    schedule_hash: String,
    data_shape: Vec<usize>,
    t_start: usize,
    t_end: usize,
    n_steps: usize,
    count: usize,
}

/// Serializes at f32 precision.
pub fn write_latent_file(batch: &LatentBatch) -> Result<Vec<u8>> {
    let header = Header {
        source_domain_tag: batch.source_domain_tag.clone(),
        schedule_hash: batch.schedule_hash.clone(),
        data_shape: batch.data_shape.clone(),
        t_start: batch.plan.t_start(),
        t_end: batch.plan.t_end(),
        n_steps: batch.plan.n_steps(),
        count: batch.len(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::format(e.to_string()))?;
    let mut out = write_preamble(LATENT_MAGIC, LATENT_VERSION, &header, batch.latents.len());
    for v in batch.latents.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn read_latent_file(bytes: &[u8]) -> Result<LatentBatch> {
    let (header, payload) = read_preamble(bytes, LATENT_MAGIC, LATENT_VERSION)?;
    let header: Header = serde_json::from_slice(header)
        .map_err(|e| Error::format(format!("bad latent header: {e}")))?;
    let dim: usize = header.data_shape.iter().product();
    if header.data_shape.is_empty() || dim == 0 {
        return Err(Error::format("latent header has an empty data shape"));
    }
    let plan = IntegrationPlan::new(header.t_start, header.t_end, header.n_steps)
        .map_err(|e| Error::format(format!("bad plan in latent header: {e}")))?;
    let values = read_f32s(payload, header.count * dim)?;
    let latents = Array2::from_shape_vec((header.count, dim), values)
        .map_err(|e| Error::Internal(e.to_string()))?;
    Ok(LatentBatch {
        latents,
        source_domain_tag: header.source_domain_tag,
        schedule_hash: header.schedule_hash,
        data_shape: header.data_shape,
        plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch(values: Vec<f32>) -> LatentBatch {
        let n = values.len() / 2;
        LatentBatch {
            latents: Array2::from_shape_vec((n, 2), values.into_iter().map(f64::from).collect())
                .unwrap(),
            source_domain_tag: "CR".into(),
            schedule_hash: "ab".repeat(32),
            data_shape: vec![2],
            plan: IntegrationPlan::encoding(1000, 200).unwrap(),
        }
    }

    proptest! {
        #[test]
        fn round_trip(values in proptest::collection::vec(-1e3f32..1e3, 0..40)) {
            let mut values = values;
            values.truncate(values.len() / 2 * 2);
            let b = batch(values);
            let back = read_latent_file(&write_latent_file(&b).unwrap()).unwrap();
            prop_assert_eq!(back, b);
        }
    }

    #[test]
    fn quantized_batch_survives_the_wire() {
        let mut b = batch(vec![0.0; 4]);
        b.latents[[0, 0]] = 0.1;
        b.latents[[1, 1]] = -1.0 / 3.0;
        let q = b.quantized();
        assert_ne!(q, b);
        assert_eq!(
            read_latent_file(&write_latent_file(&b).unwrap()).unwrap(),
            q
        );
    }

    #[test]
    fn truncated_payload_is_length_error() {
        let bytes = write_latent_file(&batch(vec![1.0; 8])).unwrap();
        let err = read_latent_file(&bytes[..bytes.len() - 4]).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }), "{err}");
    }

    #[test]
    fn empty_batch_is_valid() {
        let b = batch(vec![]);
        let back = read_latent_file(&write_latent_file(&b).unwrap()).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = write_latent_file(&batch(vec![1.0; 2])).unwrap();
        bytes[3] = b'D';
        assert!(matches!(read_latent_file(&bytes), Err(Error::Format(_))));
    }
}
