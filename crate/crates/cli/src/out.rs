//! Output directory with atomic writes and the run manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use spf_nn::checkpoint::{atomic_write, Checkpoint};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutDir { root: root.to_path_buf(), files: vec![] })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn record(&mut self, rel: String) {
        if !self.files.contains(&rel) {
            self.files.push(rel);
        }
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        atomic_write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.record(rel.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
        s.push('\n');
        self.write(rel, s.as_bytes())
    }

    /// Writes `<stem>.json` and `<stem>.bin`.
    pub fn save_checkpoint(&mut self, stem: &str, ck: &Checkpoint) -> Result<()> {
        let (json, blob) = ck.encode()?;
        self.write(&format!("{stem}.bin"), &blob)?;
        self.write(&format!("{stem}.json"), json.as_bytes())?;
        Ok(())
    }
}

/// Hex SHA-256 of the raw config bytes.
pub fn config_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub profile: Option<String>,
    pub code_version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// Paths relative to the output directory; the manifest itself excluded.
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    pub details: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config_path: &Path, config: &[u8]) -> Self {
        RunManifest {
            command: command.to_string(),
            config_path: config_path.display().to_string(),
            config_hash: config_hash(config),
            seed: None,
            profile: None,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: unix_now(),
            finished_unix: 0.0,
            files: vec![],
            warnings: vec![],
            details: serde_json::Value::Null,
        }
    }

    pub fn finish(mut self, out: &mut OutDir) -> Result<RunManifest> {
        self.files = out.files().to_vec();
        self.finished_unix = unix_now();
        out.write_json(MANIFEST, &self)?;
        Ok(self)
    }
}
