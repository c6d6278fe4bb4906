//! Run manifests: written before a command computes anything, they pin the
//! resolved configuration, derived seeds and input digests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Wall-clock creation time in Unix seconds.
    pub created_unix: u64,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputDigest>,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, inputs: &[PathBuf]) -> Result<Self> {
        let mut seeds = BTreeMap::new();
        seeds.insert("root".to_string(), config.seed);
        seeds.insert("network".to_string(), config.network_seed());
        seeds.insert("training".to_string(), config.train_config().seed);
        let inputs = inputs
            .iter()
            .filter(|p| p.exists())
            .map(|p| Ok(InputDigest { path: p.clone(), sha256: sha256_file(p)? }))
            .collect::<Result<Vec<_>>>()?;
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Ok(Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix,
            config: config.clone(),
            seeds,
            inputs,
        })
    }

    /// Writes `manifest-<command>.json` into `out_dir` and returns its path.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(format!("manifest-{}.json", self.command));
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        crate::checkpoint::write_text(&path, &text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_reloads_as_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { seed: 5, ..RunConfig::default() };
        let path = RunManifest::new("train", &cfg, &[]).unwrap().write(dir.path()).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), cfg);
    }

    #[test]
    fn digest_of_known_bytes() {
        assert_eq!(sha256_bytes(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
