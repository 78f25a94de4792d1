//! Single-file checkpoints.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` manifest length, the
//! JSON manifest, then every tensor as little-endian `f64` in manifest order.
//! All integers are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::data::Vocabulary;
use crate::error::{Result, SanError};
use crate::model::SanModel;
use crate::tensor::{RngStream, Tensor};

pub const MAGIC: &[u8; 8] = b"SANCKPT\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
    /// Byte length.
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: RunConfig,
    pub vocab: Vocabulary,
    pub tensors: Vec<TensorEntry>,
}

/// A loaded checkpoint.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub vocab: Vocabulary,
    pub model: SanModel,
}

pub fn encode_checkpoint(model: &SanModel, config: &RunConfig, vocab: &Vocabulary) -> Result<Vec<u8>> {
    let mut payload = Vec::with_capacity(model.store.num_scalars() * 8);
    let mut tensors = Vec::with_capacity(model.store.len());
    for id in model.store.ids() {
        let t = model.store.get(id);
        tensors.push(TensorEntry {
            name: model.store.name(id).to_string(),
            shape: t.shape().to_vec(),
            offset: payload.len(),
            len: t.len() * 8,
        });
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = serde_json::to_vec(&Manifest {
        version: FORMAT_VERSION,
        config: config.clone(),
        vocab: vocab.clone(),
        tensors,
    })?;
    let mut out = Vec::with_capacity(HEADER_LEN + manifest.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn save_checkpoint(path: &Path, model: &SanModel, config: &RunConfig, vocab: &Vocabulary) -> Result<()> {
    fs::write(path, encode_checkpoint(model, config, vocab)?)?;
    Ok(())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(SanError::CheckpointFormat("missing checkpoint header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(SanError::CheckpointVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let manifest_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let manifest_end = HEADER_LEN
        .checked_add(manifest_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| SanError::CheckpointFormat("manifest runs past end of file".into()))?;
    let mut manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..manifest_end])
        .map_err(|e| SanError::CheckpointFormat(format!("manifest: {e}")))?;
    if manifest.version != version {
        return Err(SanError::CheckpointFormat("header and manifest versions differ".into()));
    }
    manifest.vocab.reindex();
    let payload = &bytes[manifest_end..];
    let expected: usize = manifest.tensors.iter().map(|t| t.len).sum();
    if payload.len() < expected {
        return Err(SanError::CheckpointTruncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(SanError::CheckpointFormat(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }

    // Parameter structure comes from the config; values from the payload.
    let mut model = SanModel::new(
        manifest.config.model.clone(),
        manifest.vocab.len(),
        manifest.vocab.char_len(),
        None,
        &mut RngStream::new(0),
    )?;
    if model.store.len() != manifest.tensors.len() {
        return Err(SanError::CheckpointFormat(format!(
            "manifest lists {} tensors, model has {}",
            manifest.tensors.len(),
            model.store.len()
        )));
    }
    for (id, entry) in model.store.ids().collect::<Vec<_>>().into_iter().zip(&manifest.tensors) {
        let name = model.store.name(id).to_string();
        if name != entry.name {
            return Err(SanError::CheckpointFormat(format!(
                "expected tensor {name:?}, found {:?}",
                entry.name
            )));
        }
        let want = model.store.get(id).shape().to_vec();
        let count: usize = entry.shape.iter().product();
        if entry.shape != want || entry.len != count * 8 {
            return Err(SanError::CheckpointShape {
                name,
                found: entry.shape.clone(),
                expected: want,
            });
        }
        let raw = payload
            .get(entry.offset..entry.offset + entry.len)
            .ok_or_else(|| SanError::CheckpointFormat(format!("tensor {name:?} lies outside the payload")))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        model.store.set(id, Tensor::new(&want, data)?)?;
    }
    Ok(Checkpoint {
        config: manifest.config,
        vocab: manifest.vocab,
        model,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LabelSet, SyntheticTask, SyntheticTaskSpec};
    use crate::model::{Head, Mode, ModelConfig};

    fn fixture() -> (SanModel, RunConfig, Vocabulary) {
        let pairs = SyntheticTask::new(SyntheticTaskSpec::default())
            .unwrap()
            .generate(20, 0);
        let vocab = Vocabulary::build(&pairs, LabelSet::three_way());
        let config = RunConfig {
            model: ModelConfig::tiny(),
            ..RunConfig::default()
        };
        let model = SanModel::new(
            config.model.clone(),
            vocab.len(),
            vocab.char_len(),
            None,
            &mut RngStream::new(4),
        )
        .unwrap();
        (model, config, vocab)
    }

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let (model, config, vocab) = fixture();
        let bytes = encode_checkpoint(&model, &config, &vocab).unwrap();
        let ck = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ck.config, config);
        assert_eq!(ck.vocab, vocab);
        for id in model.store.ids() {
            assert_eq!(model.store.get(id), ck.model.store.get(id));
        }
        assert_eq!(encode_checkpoint(&ck.model, &ck.config, &ck.vocab).unwrap(), bytes);
        let input = vocab.index_pair(&SyntheticTask::new(SyntheticTaskSpec::default()).unwrap().generate(1, 5)[0]);
        assert_eq!(
            model.forward(&input, Head::Multi, Mode::Eval).unwrap(),
            ck.model.forward(&input, Head::Multi, Mode::Eval).unwrap()
        );
    }

    #[test]
    fn corruptions_map_to_distinct_errors() {
        let (model, config, vocab) = fixture();
        let bytes = encode_checkpoint(&model, &config, &vocab).unwrap();

        let truncated = &bytes[..bytes.len() - 8];
        assert!(matches!(
            decode_checkpoint(truncated),
            Err(SanError::CheckpointTruncated { .. })
        ));

        let mut versioned = bytes.clone();
        versioned[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            decode_checkpoint(&versioned),
            Err(SanError::CheckpointVersion { found: 7, .. })
        ));

        let mut other = config.clone();
        other.model.hidden = 6;
        let reshaped = encode_checkpoint(&model, &other, &vocab).unwrap();
        assert!(matches!(
            decode_checkpoint(&reshaped),
            Err(SanError::CheckpointShape { .. })
        ));

        assert!(matches!(
            decode_checkpoint(b"garbage"),
            Err(SanError::CheckpointFormat(_))
        ));
    }
}
