//! Single-file model checkpoints.
//!
//! Layout:
//!
//! ```text
//! TLDC1\n
//! <manifest length in bytes>\n
//! <TOML manifest>
//! <little-endian f32 blob, tensors in manifest order>
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CheckpointError, Error, Result};
use crate::model::{Model, ModelConfig};

pub const MAGIC: &[u8] = b"TLDC1\n";
const FORMAT_VERSION: u32 = 1;

/// Training metrics recorded alongside the weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: u32,
    pub meta: CheckpointMeta,
    pub model: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

impl Manifest {
    pub fn blob_len(&self) -> usize {
        self.tensors.iter().map(|t| t.shape.iter().product::<usize>() * 4).sum()
    }
}

pub fn to_bytes(model: &Model<f32>, meta: CheckpointMeta) -> Result<Vec<u8>> {
    let params = model.named_params();
    let manifest = Manifest {
        format: FORMAT_VERSION,
        meta,
        model: model.config().clone(),
        tensors: params.iter().map(|(name, t)| TensorEntry { name: name.clone(), shape: t.shape().to_vec() }).collect(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::State(format!("cannot encode manifest: {e}")))?;
    let mut out = Vec::with_capacity(MAGIC.len() + 16 + text.len() + manifest.blob_len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(format!("{}\n", text.len()).as_bytes());
    out.extend_from_slice(text.as_bytes());
    for (_, t) in &params {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_manifest(bytes: &[u8]) -> Result<(Manifest, &[u8]), CheckpointError> {
    let rest = bytes.strip_prefix(MAGIC).ok_or(CheckpointError::BadMagic)?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CheckpointError::Manifest("missing manifest length".into()))?;
    let len: usize = std::str::from_utf8(&rest[..nl])
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| CheckpointError::Manifest("unreadable manifest length".into()))?;
    let rest = &rest[nl + 1..];
    if rest.len() < len {
        return Err(CheckpointError::Manifest(format!("manifest claims {len} bytes but only {} remain", rest.len())));
    }
    let text = std::str::from_utf8(&rest[..len]).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    let manifest: Manifest = toml::from_str(text).map_err(|e| CheckpointError::Manifest(e.message().to_string()))?;
    if manifest.format != FORMAT_VERSION {
        return Err(CheckpointError::Manifest(format!("unsupported format version {}", manifest.format)));
    }
    Ok((manifest, &rest[len..]))
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Model<f32>, CheckpointMeta)> {
    let (manifest, blob) = read_manifest(bytes)?;
    let mut model = Model::<f32>::new(manifest.model.clone(), 0)
        .map_err(|e| CheckpointError::Manifest(format!("model config rejected: {e}")))?;

    let expected_names = model.named_params();
    if expected_names.len() != manifest.tensors.len() {
        return Err(CheckpointError::Manifest(format!(
            "manifest lists {} tensors, model has {}",
            manifest.tensors.len(),
            expected_names.len()
        ))
        .into());
    }
    for ((name, t), entry) in expected_names.iter().zip(&manifest.tensors) {
        if *name != entry.name || t.shape() != entry.shape.as_slice() {
            return Err(CheckpointError::ShapeMismatch {
                name: entry.name.clone(),
                expected: t.shape().to_vec(),
                found: entry.shape.clone(),
            }
            .into());
        }
    }
    if blob.len() != manifest.blob_len() {
        return Err(CheckpointError::BlobLengthMismatch { expected: manifest.blob_len(), actual: blob.len() }.into());
    }

    let mut words = blob.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v = words.next().expect("blob length checked");
        }
    }
    Ok((model, manifest.meta))
}

pub fn save_checkpoint(model: &Model<f32>, meta: CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(model, meta)?;
    // write-then-rename so a crash never leaves a half-written best model
    let tmp = path.with_extension("tldc.partial");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model<f32>, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Short hex digest identifying a checkpoint's exact bytes.
pub fn model_id(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}
