//! Model checkpoints: a little-endian `f64` matrix dump plus a JSON manifest.
//!
//! `factors.bin` layout: the 8-byte magic `PTFM0001`, then `n_users`, `n_items` and `k` as
//! `u64`, then the user matrix and the item matrix, row-major.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::rankals::{FactorModel, TrainConfig};
use crate::error::{Error, Result};

pub const FACTORS_FILE: &str = "factors.bin";
pub const MODEL_MANIFEST_FILE: &str = "model.json";
const MAGIC: &[u8; 8] = b"PTFM0001";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    /// Which training procedure produced the factors.
    pub variant: String,
    pub config: TrainConfig,
    pub trained_sweeps: usize,
    pub n_users: usize,
    pub n_items: usize,
    /// Fingerprint of the train ratings the model was fit on.
    pub dataset_hash: String,
    pub factors_sha256: String,
    pub objective: Vec<f64>,
}

pub const RANKALS_VARIANT: &str = "rankals/pairwise-squared/exact-item-blocks";

fn encode(model: &FactorModel) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(32 + 8 * (model.user_factors.len() + model.item_factors.len()));
    bytes.extend_from_slice(MAGIC);
    for dim in [model.n_users, model.n_items, model.k] {
        bytes.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for v in model.user_factors.iter().chain(&model.item_factors) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn save_checkpoint(dir: &Path, model: &FactorModel, dataset_hash: &str, objective: &[f64]) -> Result<ModelManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes = encode(model);
    let path = dir.join(FACTORS_FILE);
    fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    let manifest = ModelManifest {
        variant: RANKALS_VARIANT.into(),
        config: model.config,
        trained_sweeps: model.trained_sweeps,
        n_users: model.n_users,
        n_items: model.n_items,
        dataset_hash: dataset_hash.into(),
        factors_sha256: hex::encode(Sha256::digest(&bytes)),
        objective: objective.to_vec(),
    };
    let path = dir.join(MODEL_MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(FactorModel, ModelManifest)> {
    let path = dir.join(MODEL_MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: ModelManifest = serde_json::from_str(&text)?;

    let path = dir.join(FACTORS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if hex::encode(Sha256::digest(&bytes)) != manifest.factors_sha256 {
        return Err(Error::Checkpoint(format!("{} does not match its manifest digest", path.display())));
    }
    if bytes.len() < 32 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a factor dump", path.display())));
    }
    let dim = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    let (n_users, n_items, k) = (dim(8), dim(16), dim(24));
    let expected = 32 + 8 * k * (n_users + n_items);
    if bytes.len() != expected || n_users != manifest.n_users || n_items != manifest.n_items {
        return Err(Error::Checkpoint(format!(
            "{}: dimensions {n_users}x{n_items}x{k} inconsistent with file size or manifest",
            path.display()
        )));
    }
    let values: Vec<f64> = bytes[32..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (users, items) = values.split_at(n_users * k);
    let model = FactorModel {
        n_users,
        n_items,
        k,
        user_factors: users.to_vec(),
        item_factors: items.to_vec(),
        trained_sweeps: manifest.trained_sweeps,
        config: manifest.config,
    };
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let model = FactorModel {
            n_users: 2,
            n_items: 3,
            k: 2,
            user_factors: vec![0.1, -2.5, 1e-300, 7.0],
            item_factors: vec![1.0, 2.0, 3.0, f64::MIN_POSITIVE, -0.0, 5.5],
            trained_sweeps: 4,
            config: TrainConfig::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        let saved = save_checkpoint(dir.path(), &model, "abc", &[3.0, 2.0]).unwrap();
        let (loaded, manifest) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(manifest, saved);
        assert_eq!(loaded.user_factors, model.user_factors);
        assert_eq!(loaded.item_factors, model.item_factors);
        assert_eq!(loaded.trained_sweeps, 4);
    }

    #[test]
    fn corrupted_dump_is_rejected() {
        let model = FactorModel {
            n_users: 1,
            n_items: 1,
            k: 1,
            user_factors: vec![1.0],
            item_factors: vec![2.0],
            trained_sweeps: 1,
            config: TrainConfig::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &model, "x", &[]).unwrap();
        let path = dir.path().join(FACTORS_FILE);
        let mut bytes = fs::read(&path).unwrap();
        *bytes.last_mut().unwrap() ^= 1;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));
    }
}
