//! Run manifests written next to every artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use proxkit_core::kmm::SampleWeights;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;
use crate::io::write_bytes;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    pub fn of(path: &Path, bytes: &[u8]) -> Self {
        Self {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        }
    }
}

/// Summary of the training weights, positives only (negatives are always 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub positives: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub uniform: bool,
    pub converged: bool,
}

impl WeightStats {
    pub fn of(weights: &SampleWeights, labels: &[u8]) -> Self {
        let pos: Vec<f64> = weights
            .weights
            .iter()
            .zip(labels)
            .filter(|(_, &y)| y == 1)
            .map(|(w, _)| *w)
            .collect();
        let n = pos.len().max(1) as f64;
        Self {
            positives: pos.len(),
            min: pos.iter().copied().fold(f64::INFINITY, f64::min),
            max: pos.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: pos.iter().sum::<f64>() / n,
            uniform: weights.is_uniform(),
            converged: weights.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    /// Wall-clock milliseconds per stage.
    pub timings_ms: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightStats>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
            weights: None,
        }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        self.timings_ms.insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }

    /// Writes the manifest to `<artifact>.manifest.json` and returns that path.
    pub fn write_beside(&self, artifact: &Path) -> CliResult<PathBuf> {
        let path = manifest_path(artifact);
        let mut text = serde_json::to_vec_pretty(self).expect("manifest serializes");
        text.push(b'\n');
        write_bytes(&path, &text)?;
        Ok(path)
    }
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksums_and_paths() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(manifest_path(Path::new("out/model.prxm")), PathBuf::from("out/model.prxm.manifest.json"));
    }

    #[test]
    fn weight_stats_cover_positives_only() {
        let w = SampleWeights {
            weights: vec![1.0, 0.5, 1.0, 1.5],
            converged: true,
        };
        let s = WeightStats::of(&w, &[0, 1, 0, 1]);
        assert_eq!((s.positives, s.min, s.max, s.mean, s.uniform), (2, 0.5, 1.5, 1.0, false));
    }
}
