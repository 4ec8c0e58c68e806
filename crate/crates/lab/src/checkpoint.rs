//! Parameter checkpoints: `params.json` lists each tensor's name, shape and
//! byte offset into `params.bin`, which holds little-endian f32 values.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use pprgat_core::autodiff::Tensor;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST: &str = "params.json";
pub const BLOB: &str = "params.bin";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Malformed { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub blob: String,
    pub entries: Vec<Entry>,
}

pub fn save_checkpoint(dir: impl AsRef<Path>, names: &[String], params: &[Tensor<f32>]) -> Result<(), CheckpointError> {
    let dir = dir.as_ref();
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CheckpointError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(params.len());
    for (name, t) in names.iter().zip(params) {
        entries.push(Entry {
            name: name.clone(),
            rows: t.rows(),
            cols: t.cols(),
            offset: blob.len(),
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        blob: BLOB.into(),
        entries,
    };
    let blob_path = dir.join(BLOB);
    fs::write(&blob_path, blob).map_err(io(&blob_path))?;
    let manifest_path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json).map_err(io(&manifest_path))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Vec<(String, Tensor<f32>)>, CheckpointError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|source| CheckpointError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CheckpointError::Malformed {
        path: manifest_path.clone(),
        msg: e.to_string(),
    })?;
    let blob_path = dir.join(&manifest.blob);
    let blob = fs::read(&blob_path).map_err(|source| CheckpointError::Io {
        path: blob_path.clone(),
        source,
    })?;
    let bad = |msg: String| CheckpointError::Malformed {
        path: blob_path.clone(),
        msg,
    };
    let mut out = Vec::with_capacity(manifest.entries.len());
    let mut expected_offset = 0;
    for e in manifest.entries {
        let len = e.rows * e.cols;
        if e.offset != expected_offset {
            return Err(bad(format!("{} starts at byte {}, expected {expected_offset}", e.name, e.offset)));
        }
        let end = e.offset + 4 * len;
        let bytes = blob
            .get(e.offset..end)
            .ok_or_else(|| bad(format!("{} runs past the end of the blob", e.name)))?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::new(e.rows, e.cols, data).map_err(|err| bad(format!("{}: {err}", e.name)))?;
        if !t.all_finite() {
            return Err(bad(format!("{} holds non-finite values", e.name)));
        }
        out.push((e.name, t));
        expected_offset = end;
    }
    if expected_offset != blob.len() {
        return Err(bad(format!("{} trailing bytes", blob.len() - expected_offset)));
    }
    Ok(out)
}
