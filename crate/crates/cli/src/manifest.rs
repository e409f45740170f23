//! `manifest.json` and `timings.csv`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::pipeline::{Settings, StageReport, Timing};

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: Option<&'a str>,
    pub settings: Option<&'a Settings>,
    pub models: Vec<String>,
    /// Group subjects in stacking order.
    pub subjects: &'a [String],
    pub stages: &'a [StageReport],
    /// SHA-256 of every output file.
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hashes the outputs listed by `stages`.
pub fn output_hashes(dir: &Path, stages: &[StageReport]) -> Result<BTreeMap<String, String>> {
    stages
        .iter()
        .flat_map(|s| s.outputs.iter())
        .map(|f| Ok((f.clone(), file_sha256(&dir.join(f))?)))
        .collect()
}

pub fn write_manifest(dir: &Path, manifest: &Manifest<'_>) -> Result<()> {
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

pub fn write_timings(dir: &Path, rows: &[Timing]) -> Result<()> {
    let path = dir.join("timings.csv");
    let mut text = String::from("task,models,voxels,seconds\n");
    for t in rows {
        text.push_str(&format!("{},{},{},{:.6e}\n", t.task, t.models, t.voxels, t.seconds));
    }
    let mut f = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(&path, e))
}
