//! Checkpoints: a JSON manifest next to a little-endian f64 blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{MatchMismatchModel, ModelConfig};
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub n_params: usize,
    pub weights_file: String,
    pub tensors: Vec<TensorEntry>,
    /// Free-form training metadata (features, seed, history).
    pub metadata: serde_json::Value,
}

fn paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.json")), dir.join(format!("{name}.weights.bin")))
}

/// Writes `<name>.json` and `<name>.weights.bin` into `dir`.
pub fn save_checkpoint(
    model: &MatchMismatchModel,
    metadata: serde_json::Value,
    dir: &Path,
    name: &str,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let (json, bin) = paths(dir, name);
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        n_params: model.n_params(),
        weights_file: bin.file_name().unwrap().to_string_lossy().into_owned(),
        tensors: model
            .layout()
            .into_iter()
            .map(|(name, offset, shape)| TensorEntry { name, offset, shape })
            .collect(),
        metadata,
    };
    let mut bytes = Vec::with_capacity(8 * model.n_params());
    for v in model.params() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin, bytes)?;
    fs::write(&json, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(json)
}

pub fn load_checkpoint(dir: &Path, name: &str) -> Result<(MatchMismatchModel, CheckpointManifest)> {
    let (json, _) = paths(dir, name);
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(&json)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", manifest.format_version)));
    }
    let bytes = fs::read(dir.join(&manifest.weights_file))?;
    if bytes.len() != 8 * manifest.n_params {
        return Err(Error::Format(format!(
            "weights file has {} bytes, manifest declares {} parameters",
            bytes.len(),
            manifest.n_params
        )));
    }
    let params: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut model = MatchMismatchModel::zeros(manifest.config.clone())?;
    let layout: Vec<TensorEntry> =
        model.layout().into_iter().map(|(name, offset, shape)| TensorEntry { name, offset, shape }).collect();
    if layout != manifest.tensors {
        return Err(Error::Format("checkpoint tensor layout does not match its configuration".into()));
    }
    model.set_params(params)?;
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::Architecture;
    use crate::rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rng::stream(1, 0);
        let m = MatchMismatchModel::init(ModelConfig::new(Architecture::DualFeature), &mut r).unwrap();
        save_checkpoint(&m, serde_json::json!({"seed": 1}), dir.path(), "m").unwrap();
        let (back, manifest) = load_checkpoint(dir.path(), "m").unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(manifest.metadata["seed"], 1);
    }

    #[test]
    fn truncated_weights_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = MatchMismatchModel::zeros(ModelConfig::new(Architecture::SingleFeature)).unwrap();
        save_checkpoint(&m, serde_json::Value::Null, dir.path(), "m").unwrap();
        let bin = dir.path().join("m.weights.bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(dir.path(), "m"), Err(Error::Format(_))));
    }
}
