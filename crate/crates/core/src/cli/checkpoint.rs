//! Binary checkpoints: the 6-byte magic `BRNSH1`, a little-endian `u64`
//! header length, the JSON header, then every parameter as little-endian
//! `f32` in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelShape};
use crate::numkernel::ParamSet;

pub const MAGIC: &[u8; 6] = b"BRNSH1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub manifest: Vec<TensorEntry>,
    pub config_fingerprint: String,
    pub seed: u64,
    pub shape: ModelShape,
    pub config: RunConfig,
}

impl CheckpointHeader {
    pub fn payload_bytes(&self) -> usize {
        self.manifest.iter().map(|e| e.shape.iter().product::<usize>() * 4).sum()
    }
}

/// Parameter names in the same order as [`ParamSet::tensors`].
pub fn tensor_names(model: &Model) -> Vec<String> {
    let mut names = Vec::new();
    for (prefix, enc) in [("e1", &model.e1), ("e2", &model.e2)] {
        names.push(format!("{prefix}.unit_embeddings"));
        if enc.position_gains.is_some() {
            names.push(format!("{prefix}.position_gains"));
        }
        for i in 0..enc.mlp.layers.len() {
            names.push(format!("{prefix}.mlp.{i}.weight"));
            names.push(format!("{prefix}.mlp.{i}.bias"));
        }
    }
    for i in 0..model.phi.mlp.layers.len() {
        names.push(format!("phi.{i}.weight"));
        names.push(format!("phi.{i}.bias"));
    }
    names
}

pub fn manifest(model: &Model) -> Vec<TensorEntry> {
    tensor_names(model)
        .into_iter()
        .zip(model.tensors())
        .map(|(name, t)| TensorEntry { name, shape: t.shape().to_vec() })
        .collect()
}

pub fn encode_checkpoint(model: &Model, config: &RunConfig) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        manifest: manifest(model),
        config_fingerprint: config.fingerprint()?,
        seed: config.seed(),
        shape: model.shape(),
        config: config.clone(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(14 + header_json.len() + header.payload_bytes());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for t in model.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Validates magic, version and payload length before building the model.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model, CheckpointHeader)> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic(bytes[..bytes.len().min(MAGIC.len())].to_vec()));
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 8 {
        return Err(Error::Format("checkpoint ends inside the header length".into()));
    }
    let header_len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    let rest = &rest[8..];
    if rest.len() < header_len {
        return Err(Error::Format(format!(
            "header declares {header_len} bytes, only {} present",
            rest.len()
        )));
    }
    let header: CheckpointHeader = serde_json::from_slice(&rest[..header_len])?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: header.format_version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let payload = &rest[header_len..];
    let expected = header.payload_bytes();
    if payload.len() < expected {
        return Err(Error::TruncatedPayload { expected, actual: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::PayloadLength { expected, actual: payload.len() });
    }

    let mut model = Model::init(&header.shape, 0)?;
    if manifest(&model) != header.manifest {
        return Err(Error::Format("tensor manifest does not match the model shape".into()));
    }
    let mut chunks = payload.chunks_exact(4);
    for t in model.tensors_mut() {
        for v in t.data_mut() {
            *v = f32::from_le_bytes(chunks.next().expect("length checked").try_into().expect("4 bytes"));
        }
        if !t.all_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
    }
    Ok((model, header))
}

pub fn save_checkpoint(model: &Model, config: &RunConfig, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model, config)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{EncoderDims, Pooling};

    fn model(pooling: Pooling) -> Model {
        let shape = ModelShape {
            vocab1: 10,
            vocab2: 12,
            max_len: if pooling == Pooling::Mean { 0 } else { 3 },
            num_classes: 4,
            dims: EncoderDims { embed: 3, hidden: 5, out: 2 },
            pooling,
        };
        Model::init(&shape, 7).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for pooling in [Pooling::Mean, Pooling::PositionTagged] {
            let m = model(pooling);
            let bytes = encode_checkpoint(&m, &RunConfig::default()).unwrap();
            let (back, header) = decode_checkpoint(&bytes).unwrap();
            assert!(back.same_parameters(&m));
            assert_eq!(header.config, RunConfig::default());
            assert_eq!(header.manifest.len(), m.tensors().len());
            assert_eq!(encode_checkpoint(&back, &header.config).unwrap(), bytes);
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode_checkpoint(&model(Pooling::Mean), &RunConfig::default()).unwrap();

        let mut bad = bytes.clone();
        bad[..6].copy_from_slice(b"XXXXXX");
        assert!(matches!(decode_checkpoint(&bad), Err(Error::BadMagic(m)) if m == b"XXXXXX"));

        let short = &bytes[..bytes.len() - 4];
        assert!(matches!(decode_checkpoint(short), Err(Error::TruncatedPayload { .. })));

        let mut long = bytes.clone();
        long.extend_from_slice(&[0; 4]);
        assert!(matches!(decode_checkpoint(&long), Err(Error::PayloadLength { .. })));

        assert!(decode_checkpoint(&bytes[..10]).is_err());
    }

    #[test]
    fn version_checked() {
        let m = model(Pooling::Mean);
        let bytes = encode_checkpoint(&m, &RunConfig::default()).unwrap();
        let len = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[14..14 + len]).unwrap();
        let patched = header.replacen("\"format_version\":1", "\"format_version\":9", 1);
        let mut out = bytes[..14].to_vec();
        out.extend_from_slice(patched.as_bytes());
        out.extend_from_slice(&bytes[14 + len..]);
        assert!(matches!(decode_checkpoint(&out), Err(Error::VersionMismatch { found: 9, .. })));
    }
}
