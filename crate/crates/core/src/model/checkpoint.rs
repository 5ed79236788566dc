//! Manifest + blob archives.
//!
//! A JSON manifest lists every tensor's name, shape, byte offset and element
//! count; the values live in a sibling `.bin` file as little-endian IEEE-754
//! doubles, back to back in manifest order. Model checkpoints and the dataset
//! cache both use this layout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ModelConfig;
use super::mat::MatModel;
use crate::error::{MatError, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "mat-archive";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    kind: String,
    blob: String,
    blob_bytes: u64,
    meta: Value,
    entries: Vec<ArchiveEntry>,
}

/// In-memory contents of an archive.
#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    pub kind: String,
    pub meta: Value,
    pub tensors: Vec<(String, Tensor)>,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn write_archive(manifest_path: &Path, archive: &Archive) -> Result<()> {
    let blob = blob_path(manifest_path);
    let mut bytes = Vec::new();
    let mut entries = Vec::with_capacity(archive.tensors.len());
    for (name, t) in &archive.tensors {
        entries.push(ArchiveEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset: bytes.len() as u64,
            count: t.len(),
        });
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: CHECKPOINT_VERSION,
        kind: archive.kind.clone(),
        blob: blob
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        blob_bytes: bytes.len() as u64,
        meta: archive.meta.clone(),
        entries,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| MatError::Checkpoint(e.to_string()))?;
    fs::write(&blob, &bytes).map_err(|e| MatError::io(&blob, e))?;
    fs::write(manifest_path, json + "\n").map_err(|e| MatError::io(manifest_path, e))?;
    Ok(())
}

pub fn read_archive(manifest_path: &Path) -> Result<Archive> {
    let text = fs::read_to_string(manifest_path).map_err(|e| MatError::io(manifest_path, e))?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| MatError::Checkpoint(format!("manifest: {e}")))?;
    match raw.get("version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
        Some(v) => return Err(MatError::Checkpoint(format!("unsupported archive version {v}"))),
        None => return Err(MatError::Checkpoint("manifest has no version field".into())),
    }
    let manifest: Manifest = serde_json::from_value(raw).map_err(|e| MatError::Checkpoint(format!("manifest: {e}")))?;
    if manifest.format != FORMAT {
        return Err(MatError::Checkpoint(format!("unknown format {:?}", manifest.format)));
    }
    let blob = manifest_path.with_file_name(&manifest.blob);
    let bytes = fs::read(&blob).map_err(|e| MatError::io(&blob, e))?;
    if bytes.len() as u64 != manifest.blob_bytes {
        return Err(MatError::Checkpoint(format!(
            "blob has {} bytes, manifest says {}",
            bytes.len(),
            manifest.blob_bytes
        )));
    }
    let mut tensors = Vec::with_capacity(manifest.entries.len());
    for e in manifest.entries {
        let start = e.offset as usize;
        let end = start + e.count * 8;
        if end > bytes.len() {
            return Err(MatError::Checkpoint(format!("entry {} runs past the blob", e.name)));
        }
        let data = bytes[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(e.shape, data).map_err(|err| MatError::Checkpoint(format!("{}: {err}", e.name)))?;
        tensors.push((e.name, t));
    }
    Ok(Archive {
        kind: manifest.kind,
        meta: manifest.meta,
        tensors,
    })
}

impl MatModel {
    /// Checkpoint archive; `extra` is stored under `meta.extra`.
    pub fn to_archive(&self, extra: Value) -> Archive {
        Archive {
            kind: "checkpoint".into(),
            meta: serde_json::json!({ "config": self.config, "extra": extra }),
            tensors: self.params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
        }
    }

    pub fn from_archive(archive: &Archive) -> Result<MatModel> {
        if archive.kind != "checkpoint" {
            return Err(MatError::Checkpoint(format!("archive kind {:?} is not a checkpoint", archive.kind)));
        }
        let config: ModelConfig = serde_json::from_value(archive.meta["config"].clone())
            .map_err(|e| MatError::Checkpoint(format!("config: {e}")))?;
        let mut model = MatModel::new(config)?;
        let mut loaded = crate::params::ParamStore::new();
        for (n, t) in &archive.tensors {
            loaded.add(n.clone(), t.clone());
        }
        model.params.load_from(&loaded)?;
        Ok(model)
    }

    pub fn save(&self, manifest_path: &Path, extra: Value) -> Result<()> {
        write_archive(manifest_path, &self.to_archive(extra))
    }

    /// Loads a checkpoint, returning the model and the caller's `extra` metadata.
    pub fn load(manifest_path: &Path) -> Result<(MatModel, Value)> {
        let archive = read_archive(manifest_path)?;
        let model = MatModel::from_archive(&archive)?;
        Ok((model, archive.meta["extra"].clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = MatModel::new(ModelConfig::toy()).unwrap();
        model.save(&path, serde_json::json!({"note": 1})).unwrap();
        let (back, extra) = MatModel::load(&path).unwrap();
        assert_eq!(back.params, model.params);
        assert_eq!(back.config, model.config);
        assert_eq!(extra["note"], 1);
        // blob is little-endian f64, first entry at offset 0
        let bytes = fs::read(dir.path().join("model.bin")).unwrap();
        let first = f64::from_le_bytes(bytes[..8].try_into().unwrap());
        assert_eq!(first, model.params.tensors()[0].data()[0]);
    }

    #[test]
    fn version_is_mandatory() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        let arch = Archive {
            kind: "x".into(),
            meta: Value::Null,
            tensors: vec![("t".into(), Tensor::vector(vec![1.0, 2.0]))],
        };
        write_archive(&path, &arch).unwrap();
        assert_eq!(read_archive(&path).unwrap(), arch);
        let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("version");
        fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(read_archive(&path), Err(MatError::Checkpoint(_))));
        v["version"] = 99.into();
        fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(read_archive(&path), Err(MatError::Checkpoint(_))));
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        let arch = Archive {
            kind: "x".into(),
            meta: Value::Null,
            tensors: vec![("t".into(), Tensor::vector(vec![1.0, 2.0]))],
        };
        write_archive(&path, &arch).unwrap();
        fs::write(dir.path().join("a.bin"), [0u8; 8]).unwrap();
        assert!(read_archive(&path).is_err());
    }
}
