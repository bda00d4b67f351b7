//! Run manifests: config echo plus input hashes, enough to reproduce a run.

use crate::config::PipelineConfig;
use crate::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    pub seed: u64,
    pub config: String,
    pub inputs: Vec<InputHash>,
    /// Free-form per-command facts (frame counts, baselines, indices).
    pub extra: std::collections::BTreeMap<String, String>,
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

impl RunManifest {
    pub fn new(command: &str, cfg: &PipelineConfig) -> RunManifest {
        RunManifest {
            version: 1,
            command: command.to_string(),
            seed: cfg.seed,
            config: cfg.to_toml(),
            inputs: Vec::new(),
            extra: Default::default(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputHash {
            path: path.display().to_string(),
            sha256: hash_file(path)?,
        });
        Ok(())
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.extra.insert(key.to_string(), value.to_string());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| crate::PipelineError::Config(e.to_string()))?;
        std::fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(dir.join("manifest.json"))?;
        serde_json::from_str(&text).map_err(|e| crate::PipelineError::Format {
            path: dir.join("manifest.json").display().to_string(),
            detail: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::default();
        let mut m = RunManifest::new("gen-synth", &cfg);
        m.insert("frames", 60);
        let input = dir.path().join("input.bin");
        std::fs::write(&input, b"hello").unwrap();
        m.add_input(&input).unwrap();
        m.write(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back.command, "gen-synth");
        assert_eq!(back.extra["frames"], "60");
        assert_eq!(back.inputs.len(), 1);
        assert_eq!(
            back.inputs[0].sha256,
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
    }
}
