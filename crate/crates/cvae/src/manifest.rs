//! Content fingerprints and per-command run manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn fingerprint_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(Error::io(path))?))
}

/// Record of one command invocation, written next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub threads: usize,
    pub config: Config,
    /// File name → sha256 of every input read.
    pub inputs: BTreeMap<String, String>,
    /// File name → sha256 of every output written.
    pub outputs: BTreeMap<String, String>,
    pub wall_seconds: f64,
    /// Command-specific facts (counts, selected β, ...).
    pub details: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, threads: usize) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            threads,
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            wall_seconds: 0.0,
            details: serde_json::Value::Null,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), fingerprint_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), fingerprint_file(path)?);
        Ok(())
    }

    pub fn file_name(command: &str) -> String {
        format!("run_manifest_{command}.json")
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(&self.command));
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(Error::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(Error::io(path))
}
