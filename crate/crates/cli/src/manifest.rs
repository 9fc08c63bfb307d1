//! Run manifests: what was run, on which inputs, producing which outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> std::io::Result<Self> {
        Ok(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(&fs::read(path)?),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    /// Fully resolved settings, defaults included.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// Value of `BAE_SEED` at run time, if set.
    pub env_seed: Option<String>,
    pub threads: usize,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub stdout_sha256: Option<String>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(path, text)
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        serde_json::from_slice(&fs::read(path)?).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
