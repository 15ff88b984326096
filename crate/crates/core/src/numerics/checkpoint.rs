use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::store::Param;
use super::{Array, Init, NumericsError, ParameterStore, Precision, Real};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Value,
    AdamM,
    AdamV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointEntry {
    pub name: String,
    pub kind: EntryKind,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
    /// Number of values.
    pub len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Init>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub version: u32,
    pub precision: Precision,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub adam_state: bool,
    pub entries: Vec<CheckpointEntry>,
    /// Free-form run metadata (model config, vocabulary fingerprint, seed).
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<F> {
    pub manifest: CheckpointManifest,
    pub store: ParameterStore<F>,
}

fn blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

/// Writes `<path>` (JSON manifest) and `<path stem>.bin` (little-endian values
/// in manifest order).
pub fn save_checkpoint<F: Real>(
    path: &Path,
    store: &ParameterStore<F>,
    adam_state: bool,
    meta: serde_json::Value,
) -> Result<CheckpointManifest, NumericsError> {
    let blob_file = blob_path(path);
    let width = F::PRECISION.byte_width();
    let mut blob = Vec::with_capacity(store.num_scalars() * width * if adam_state { 3 } else { 1 });
    let mut entries = Vec::new();
    for (name, p) in store.raw() {
        let mut put = |kind: EntryKind, a: &Array<F>, step: Option<u64>, init: Option<Init>| {
            entries.push(CheckpointEntry {
                name: name.clone(),
                kind,
                shape: a.shape().to_vec(),
                offset: blob.len(),
                len: a.len(),
                step,
                init,
            });
            for &x in a.data() {
                x.write_le(&mut blob);
            }
        };
        put(EntryKind::Value, &p.value, Some(p.step), Some(p.init));
        if adam_state {
            put(EntryKind::AdamM, &p.m, None, None);
            put(EntryKind::AdamV, &p.v, None, None);
        }
    }
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        precision: F::PRECISION,
        blob: blob_file
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| NumericsError::Checkpoint(format!("bad path {}", path.display())))?
            .to_string(),
        adam_state,
        entries,
        meta,
    };
    fs::write(&blob_file, &blob)?;
    fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

fn read_values<F: Real>(blob: &[u8], e: &CheckpointEntry, precision: Precision) -> Result<Array<F>, NumericsError> {
    let w = precision.byte_width();
    let end = e.offset + e.len * w;
    if end > blob.len() || e.shape.iter().product::<usize>() != e.len {
        return Err(NumericsError::Checkpoint(format!("entry '{}' out of bounds", e.name)));
    }
    let bytes = &blob[e.offset..end];
    let data: Vec<F> = match precision {
        Precision::F32 => bytes.chunks_exact(4).map(|c| F::of(f32::read_le(c) as f64)).collect(),
        Precision::F64 => bytes.chunks_exact(8).map(|c| F::of(f64::read_le(c))).collect(),
    };
    Array::new(e.shape.clone(), data)
}

/// Reads a checkpoint, converting precision if needed.
pub fn load_checkpoint<F: Real>(path: &Path) -> Result<Checkpoint<F>, NumericsError> {
    let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(NumericsError::Checkpoint(format!(
            "unsupported version {} (expected {CHECKPOINT_VERSION})",
            manifest.version
        )));
    }
    let blob_file = path.with_file_name(&manifest.blob);
    let blob = fs::read(&blob_file)?;
    let mut store = ParameterStore::new(0);
    for e in manifest.entries.iter().filter(|e| e.kind == EntryKind::Value) {
        let value = read_values::<F>(&blob, e, manifest.precision)?;
        let find = |kind| {
            manifest
                .entries
                .iter()
                .find(|x| x.name == e.name && x.kind == kind)
                .map(|x| read_values::<F>(&blob, x, manifest.precision))
                .transpose()
        };
        let m = find(EntryKind::AdamM)?.unwrap_or_else(|| Array::zeros(value.shape()));
        let v = find(EntryKind::AdamV)?.unwrap_or_else(|| Array::zeros(value.shape()));
        let step = if manifest.adam_state { e.step.unwrap_or(0) } else { 0 };
        store.insert_raw(
            e.name.clone(),
            Param {
                value,
                m,
                v,
                step,
                init: e.init.unwrap_or(Init::Explicit),
            },
        );
    }
    Ok(Checkpoint { manifest, store })
}
