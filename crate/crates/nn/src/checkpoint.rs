//! Checkpoints as a JSON manifest plus a raw little-endian `f64` blob.
//!
//! The manifest lists every tensor with its shape and byte offset into the
//! blob. Tensors are stored back to back in manifest order.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamTree, Tensor};

pub const FORMAT: &str = "spf-checkpoint";
pub const VERSION: u32 = 1;
/// Refuse manifests describing more than this many values (2 GiB of data).
pub const MAX_VALUES: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub step: u64,
    pub blob_bytes: usize,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub params: ParamTree,
    pub meta: serde_json::Value,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(step: u64, params: ParamTree, meta: serde_json::Value) -> Self {
        Checkpoint { step, params, meta }
    }

    /// `(manifest JSON, blob)`
    pub fn encode(&self) -> Result<(String, Vec<u8>)> {
        let mut blob = Vec::with_capacity(self.params.num_values() * 8);
        let mut tensors = Vec::with_capacity(self.params.len());
        for (name, t) in self.params.iter() {
            tensors.push(TensorEntry { name: name.to_string(), shape: t.shape().to_vec(), offset: blob.len() });
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            version: VERSION,
            dtype: "f64-le".into(),
            step: self.step,
            blob_bytes: blob.len(),
            tensors,
            meta: self.meta.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| bad(e.to_string()))?;
        Ok((json, blob))
    }

    pub fn decode(manifest: &[u8], blob: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(manifest).map_err(|e| bad(format!("manifest: {e}")))?;
        if m.format != FORMAT || m.version != VERSION {
            return Err(bad(format!("unsupported format {} v{}", m.format, m.version)));
        }
        if m.dtype != "f64-le" {
            return Err(bad(format!("unsupported dtype {}", m.dtype)));
        }
        if m.blob_bytes != blob.len() {
            return Err(bad(format!("blob has {} bytes, manifest says {}", blob.len(), m.blob_bytes)));
        }
        let mut seen = BTreeSet::new();
        let mut params = ParamTree::new();
        let mut cursor = 0usize;
        let mut total = 0usize;
        for e in &m.tensors {
            if !seen.insert(e.name.as_str()) {
                return Err(bad(format!("duplicate tensor {}", e.name)));
            }
            let count = e
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&c| c <= MAX_VALUES)
                .ok_or_else(|| bad(format!("tensor {} is too large", e.name)))?;
            total = total.checked_add(count).filter(|&t| t <= MAX_VALUES).ok_or_else(|| bad("too many values"))?;
            if e.offset != cursor {
                return Err(bad(format!("tensor {} at offset {}, expected {cursor}", e.name, e.offset)));
            }
            let end = cursor + count * 8;
            let bytes = blob.get(cursor..end).ok_or_else(|| bad(format!("tensor {} runs past the blob", e.name)))?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            params.insert(e.name.clone(), Tensor::new(e.shape.clone(), data)?)?;
            cursor = end;
        }
        if cursor != blob.len() {
            return Err(bad("trailing bytes after the last tensor"));
        }
        Ok(Checkpoint { step: m.step, params, meta: m.meta })
    }

    /// Writes `<stem>.json` and `<stem>.bin`, each atomically.
    pub fn save(&self, stem: &Path) -> Result<(PathBuf, PathBuf)> {
        let (json, blob) = self.encode()?;
        let (mp, bp) = paths(stem);
        atomic_write(&bp, &blob)?;
        atomic_write(&mp, json.as_bytes())?;
        Ok((mp, bp))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (mp, bp) = paths(stem);
        Self::decode(&fs::read(mp)?, &fs::read(bp)?)
    }
}

pub fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

/// Writes to a sibling temp file, syncs, then renames over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}
