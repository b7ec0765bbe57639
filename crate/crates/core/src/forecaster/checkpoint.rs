//! Checkpoints: a flat little-endian `f64` file plus a JSON sidecar at
//! `<path>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NetConfig, WeightPartition};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub param_count: usize,
    pub ada_mask_runs: Vec<[usize; 2]>,
    pub config: NetConfig,
    pub seed: u64,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn save_checkpoint(path: &Path, weights: &WeightPartition) -> Result<()> {
    let bytes: Vec<u8> = weights.weights.iter().flat_map(|w| w.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let meta = CheckpointMeta {
        param_count: weights.weights.len(),
        ada_mask_runs: weights.ada_mask_runs(),
        config: weights.config.clone(),
        seed: weights.seed,
    };
    let side = sidecar(path);
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(&side, json + "\n").map_err(|e| Error::io(side, e))
}

pub fn load_checkpoint(path: &Path) -> Result<WeightPartition> {
    let side = sidecar(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != meta.param_count * 8 {
        return Err(Error::invalid(
            "checkpoint",
            format!("{} bytes for {} parameters", bytes.len(), meta.param_count),
        ));
    }
    let weights = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let partition = WeightPartition {
        ada_mask: WeightPartition::mask_from_runs(meta.param_count, &meta.ada_mask_runs)?,
        config: meta.config,
        weights,
        seed: meta.seed,
    };
    partition.check()?;
    Ok(partition)
}
