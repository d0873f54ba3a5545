//! Binary artifact container shared by heads and fitted explainers:
//! 4-byte magic, u32 LE header length, compact JSON header, then the
//! parameter payload as little-endian f32.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::head::{Architecture, ClassifierHead};
use super::train::TrainConfig;
use crate::{Error, Result};

pub const HEAD_MAGIC: &[u8; 4] = b"CEBH";

pub fn encode_artifact<H: Serialize>(magic: &[u8; 4], header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::contract(format!("header: {e}")))?;
    let mut out = Vec::with_capacity(8 + json.len() + 4 * payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Splits an artifact into its header and payload. The payload must hold
/// exactly `expected_len(header)` floats.
pub fn decode_artifact<H: DeserializeOwned>(
    magic: &[u8; 4],
    bytes: &[u8],
    expected_len: impl FnOnce(&H) -> usize,
) -> Result<(H, Vec<f64>)> {
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(Error::Format {
            offset: 0,
            message: format!("expected magic {:?}", String::from_utf8_lossy(magic)),
        });
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let end = 8usize.checked_add(header_len).filter(|e| *e <= bytes.len()).ok_or(Error::Format {
        offset: 4,
        message: "header runs past end of file".into(),
    })?;
    let header: H = serde_json::from_slice(&bytes[8..end]).map_err(|e| Error::Format {
        offset: 8,
        message: format!("bad header: {e}"),
    })?;
    let n = expected_len(&header);
    let payload = &bytes[end..];
    if payload.len() != 4 * n {
        return Err(Error::Format {
            offset: end as u64,
            message: format!("payload holds {} bytes, expected {} floats", payload.len(), n),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((header, values))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadHeader {
    architecture: Architecture,
    input_dim: usize,
    classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train_config: Option<TrainConfig>,
}

pub fn head_to_bytes(head: &ClassifierHead, train_config: Option<&TrainConfig>) -> Result<Vec<u8>> {
    let header = HeadHeader {
        architecture: head.architecture(),
        input_dim: head.input_dim(),
        classes: head.classes(),
        train_config: train_config.cloned(),
    };
    encode_artifact(HEAD_MAGIC, &header, head.params())
}

pub fn head_from_bytes(bytes: &[u8]) -> Result<(ClassifierHead, Option<TrainConfig>)> {
    let (header, params): (HeadHeader, _) = decode_artifact(HEAD_MAGIC, bytes, |h: &HeadHeader| {
        ClassifierHead::param_count(h.architecture, h.input_dim, h.classes)
    })?;
    let head = ClassifierHead::from_params(header.architecture, header.input_dim, header.classes, params)?;
    Ok((head, header.train_config))
}

pub fn save_head(path: &Path, head: &ClassifierHead, train_config: Option<&TrainConfig>) -> Result<()> {
    let bytes = head_to_bytes(head, train_config)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_head(path: &Path) -> Result<(ClassifierHead, Option<TrainConfig>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    head_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn quantized_head_round_trips_exactly() {
        let mut head = ClassifierHead::init(Architecture::Mlp { hidden: 3 }, 5, 2, &mut substream(4, "t"));
        head.quantize_f32();
        let cfg = TrainConfig::default();
        let bytes = head_to_bytes(&head, Some(&cfg)).unwrap();
        let (back, back_cfg) = head_from_bytes(&bytes).unwrap();
        assert_eq!(back, head);
        assert_eq!(back_cfg, Some(cfg));
        assert_eq!(head_to_bytes(&back, Some(&TrainConfig::default())).unwrap(), bytes);
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let head = ClassifierHead::zeros(Architecture::Linear, 2, 2);
        let bytes = head_to_bytes(&head, None).unwrap();
        assert!(matches!(head_from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Format { .. })));
        assert!(matches!(head_from_bytes(b"XXXX\0\0\0\0"), Err(Error::Format { offset: 0, .. })));
    }
}
