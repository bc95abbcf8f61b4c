use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use vae_lab::Dataset;

use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub name: String,
    pub count: usize,
    /// SHA-256 over the little-endian `f64` pixel values.
    pub sha256: String,
}

impl DatasetFingerprint {
    pub fn of(data: &Dataset) -> Self {
        let mut h = Sha256::new();
        for v in data.images().data() {
            h.update(v.to_le_bytes());
        }
        DatasetFingerprint {
            name: data.name().to_string(),
            count: data.len(),
            sha256: hex(&h.finalize()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub dataset: Option<DatasetFingerprint>,
    pub artifacts: Vec<PathBuf>,
    pub duration_seconds: f64,
    #[serde(default)]
    pub summary: Value,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// `out/model.vaes` → `out/model.manifest.json`.
pub fn manifest_path(primary: &Path) -> PathBuf {
    sibling(primary, "manifest.json")
}

/// Replaces the extension of `primary` with `ext`.
pub fn sibling(primary: &Path, ext: &str) -> PathBuf {
    primary.with_extension(ext)
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    Ok(hex(&Sha256::digest(fs::read(path)?)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
