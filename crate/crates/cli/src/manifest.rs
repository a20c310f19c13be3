use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::input(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Seconds since the epoch, taken from `SOURCE_DATE_EPOCH` when set so that
/// repeated runs can produce identical manifests.
fn timestamp() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse::<i64>().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs() as i64)
                .unwrap_or(0)
        });
    chrono::DateTime::from_timestamp(secs, 0).map(|t| t.to_rfc3339()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub started: String,
    pub finished: String,
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn start(command: &str, config: &impl Serialize, seeds: Vec<u64>) -> Result<Self, CliError> {
        let config = serde_json::to_value(config).map_err(|e| CliError::Validation(e.to_string()))?;
        let canonical = serde_json::to_vec(&config).map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(&canonical),
            config,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: timestamp(),
            finished: String::new(),
            extra: BTreeMap::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let sha256 = file_digest(path)?;
        self.inputs.push(Artifact { path: path.display().to_string(), sha256 });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        let sha256 = file_digest(path)?;
        self.outputs.push(Artifact { path: path.display().to_string(), sha256 });
        Ok(())
    }

    /// Write the manifest to `path` and return it.
    pub fn finish(mut self, path: &Path) -> Result<PathBuf, CliError> {
        self.finished = timestamp();
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Validation(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| CliError::output(path, e))?;
        Ok(path.to_path_buf())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
