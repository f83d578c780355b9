//! Artifact files.

use std::path::Path;

use serde::Serialize;

use crate::RunError;

/// Serialize rows as CSV with a header line.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| RunError::Plan(e.to_string()))
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), RunError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| RunError::Io { path, source: e })
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub created_unix: u64,
    /// Resolved configuration, defaults included.
    pub config: &'a crate::ExperimentConfig,
    /// Derived parameters at the base scale.
    pub params: &'a irregflow_core::Params,
    pub metrics: &'a serde_json::Value,
    pub files: Vec<String>,
}
