//! CSV tables and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Git-style object hash (`blob <len>\0<bytes>`) using SHA-256.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("{:x}", h.finalize())
}

/// Collects artifacts written into one output directory, which is created
/// on the first write.
pub struct ArtifactDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactDir {
    pub fn new(dir: &Path) -> Self {
        ArtifactDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        }
    }

    pub fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir)?;
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn artifacts(&self) -> &[String] {
        &self.written
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }
}

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputHash>,
    pub duration_seconds: f64,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.into()))?;
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

pub fn input_hashes(inputs: &[(PathBuf, Vec<u8>)]) -> Vec<InputHash> {
    inputs
        .iter()
        .map(|(p, bytes)| InputHash {
            path: p.display().to_string(),
            sha256: blob_hash(bytes),
        })
        .collect()
}
