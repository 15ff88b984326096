//! Reading inputs and writing artifacts. JSON artifacts carry a `run` block;
//! line- and CSV-oriented ones get a `<file>.meta.json` sidecar instead.

use std::fs;
use std::path::{Path, PathBuf};

use rxnctx_core::config::{load_config, RunMeta};
use rxnctx_core::reaction::{write_rejections, Rejection};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{invalid, CliResult};

pub fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| invalid(format!("cannot read input {}: {e}", path.display())))
}

pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{what} {} does not exist", path.display())))
    }
}

/// Config from `path`, or the type's defaults.
pub fn config_or_default<T: DeserializeOwned>(path: Option<&Path>) -> CliResult<T> {
    match path {
        Some(p) => {
            require_file(p, "config file")?;
            Ok(load_config(p)?)
        }
        None => Ok(serde_json::from_str("{}").expect("config types default every field")),
    }
}

pub fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    ensure_parent(path)?;
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// `value` with a top-level `run` key added.
pub fn with_run<T: Serialize>(value: &T, meta: &RunMeta) -> CliResult<serde_json::Value> {
    let mut v = serde_json::to_value(value)?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("run".into(), meta.to_value());
            Ok(v)
        }
        None => Ok(serde_json::json!({ "value": v, "run": meta.to_value() })),
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn write_meta_sidecar(path: &Path, meta: &RunMeta) -> CliResult<()> {
    let file = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    write_json(&meta_path(path), &serde_json::json!({ "artifact": file, "run": meta }))
}

pub fn write_lines<I: IntoIterator<Item = String>>(path: &Path, lines: I, meta: &RunMeta) -> CliResult<()> {
    ensure_parent(path)?;
    let mut text = String::new();
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    fs::write(path, text)?;
    write_meta_sidecar(path, meta)
}

/// `<input>.rejected`, tab-separated, always written (header only when nothing was rejected).
pub fn write_rejected(input: &Path, rejected: &[Rejection]) -> CliResult<()> {
    let mut name = input.file_name().unwrap_or_default().to_os_string();
    name.push(".rejected");
    let path = input.with_file_name(name);
    let mut buf = Vec::new();
    write_rejections(&mut buf, rejected)?;
    fs::write(&path, buf)?;
    if !rejected.is_empty() {
        log::warn!("{} lines rejected; see {}", rejected.len(), path.display());
    }
    Ok(())
}
