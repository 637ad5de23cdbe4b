//! Checkpoints: a flat little-endian `f64` vector plus a JSON sidecar
//! describing the model and the segment layout.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelKind, ModelSpec, ParamVector, Segment};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSidecar {
    pub format_version: u32,
    pub dtype: String,
    pub byte_order: String,
    pub dimension: usize,
    pub spec: ModelSpec,
    pub segments: Vec<Segment>,
}

/// Serializes `params` into the binary payload and the sidecar JSON.
pub fn encode_checkpoint(spec: &ModelSpec, params: &ParamVector) -> Result<(Vec<u8>, String)> {
    if spec.layout() != params.layout() {
        return Err(Error::Checkpoint("parameter layout does not match the model spec".into()));
    }
    let mut bytes = Vec::with_capacity(params.len() * 8);
    for v in params.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let sidecar = CheckpointSidecar {
        format_version: CHECKPOINT_FORMAT_VERSION,
        dtype: "f64".into(),
        byte_order: "little".into(),
        dimension: params.len(),
        spec: spec.clone(),
        segments: params.layout().to_vec(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok((bytes, json))
}

/// Parses a payload and sidecar back into a spec and parameters.
pub fn decode_checkpoint(bytes: &[u8], sidecar_json: &str) -> Result<(ModelSpec, ParamVector)> {
    let sidecar: CheckpointSidecar = serde_json::from_str(sidecar_json).map_err(|e| Error::Checkpoint(format!("sidecar: {e}")))?;
    if sidecar.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {}", sidecar.format_version)));
    }
    if sidecar.dtype != "f64" || sidecar.byte_order != "little" {
        return Err(Error::Checkpoint(format!("unsupported encoding {}/{}", sidecar.dtype, sidecar.byte_order)));
    }
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!("payload length {} is not a multiple of 8", bytes.len())));
    }
    let n = bytes.len() / 8;
    if sidecar.dimension != n {
        return Err(Error::DimensionMismatch {
            expected: sidecar.dimension,
            actual: n,
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let params = ParamVector::with_layout(sidecar.segments, values)?;

    // Every width of a consistent spec is bounded by the parameter count, so
    // checking this first keeps the layout arithmetic below from overflowing.
    let spec = sidecar.spec;
    spec.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut widths = vec![spec.d_in, spec.num_classes];
    if let ModelKind::Mlp { hidden } = &spec.kind {
        if hidden.len() > n {
            return Err(Error::Checkpoint("more layers than parameters".into()));
        }
        widths.extend_from_slice(hidden);
    }
    if widths.iter().any(|&w| w > n) {
        return Err(Error::Checkpoint("model spec is larger than the payload".into()));
    }
    if spec.layout() != params.layout() {
        return Err(Error::Checkpoint("segment layout does not match the model spec".into()));
    }
    Ok((spec, params))
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn save_checkpoint(stem: &Path, spec: &ModelSpec, params: &ParamVector) -> Result<()> {
    let (bytes, json) = encode_checkpoint(spec, params)?;
    let bin = stem.with_extension("bin");
    let side = stem.with_extension("json");
    std::fs::write(&bin, bytes).map_err(|source| Error::Io { path: bin, source })?;
    std::fs::write(&side, json).map_err(|source| Error::Io { path: side, source })?;
    Ok(())
}

pub fn load_checkpoint(stem: &Path) -> Result<(ModelSpec, ParamVector)> {
    let bin = stem.with_extension("bin");
    let side = stem.with_extension("json");
    let bytes = std::fs::read(&bin).map_err(|source| Error::Io { path: bin, source })?;
    let json = std::fs::read_to_string(&side).map_err(|source| Error::Io { path: side, source })?;
    decode_checkpoint(&bytes, &json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::init_params;

    #[test]
    fn round_trip() {
        let spec = ModelSpec::mlp(3, 4, vec![6]);
        let params = init_params(&spec, 1).unwrap();
        let (bytes, json) = encode_checkpoint(&spec, &params).unwrap();
        assert_eq!(bytes.len(), params.len() * 8);
        let (s2, p2) = decode_checkpoint(&bytes, &json).unwrap();
        assert_eq!(s2, spec);
        assert_eq!(p2, params);
    }

    #[test]
    fn rejects_truncated_payload() {
        let spec = ModelSpec::logistic(2, 2, true);
        let params = init_params(&spec, 0).unwrap();
        let (bytes, json) = encode_checkpoint(&spec, &params).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 8], &json).is_err());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3], &json).is_err());
        assert!(decode_checkpoint(&bytes, "{").is_err());
    }

    #[test]
    fn rejects_spec_layout_mismatch() {
        let spec = ModelSpec::logistic(2, 2, true);
        let params = init_params(&spec, 0).unwrap();
        let (bytes, json) = encode_checkpoint(&spec, &params).unwrap();
        let tampered = json.replace("\"fit_intercept\": true", "\"fit_intercept\": false");
        assert!(decode_checkpoint(&bytes, &tampered).is_err());
        let huge = json.replace("\"d_in\": 2", "\"d_in\": 18446744073709551615");
        assert!(decode_checkpoint(&bytes, &huge).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ModelSpec::logistic(2, 3, true);
        let params = ParamVector::from_values(&spec, (0..9).map(f64::from).collect()).unwrap();
        let stem = dir.path().join("final");
        save_checkpoint(&stem, &spec, &params).unwrap();
        assert_eq!(load_checkpoint(&stem).unwrap().1, params);
    }
}
