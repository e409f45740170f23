//! JSON model-space configuration. Relative paths resolve against the
//! directory of the config file.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    /// One design matrix per session.
    pub designs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(untagged)]
pub enum PrecisionEntry {
    #[default]
    #[serde(skip)]
    Identity,
    Keyword(String),
    /// One file per session: an n×n matrix or a single row/column diagonal.
    Files(Vec<PathBuf>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase", deny_unknown_fields)]
pub enum SessionsEntry {
    #[default]
    Multi,
    Single {
        #[serde(default = "default_min_scans")]
        min_scans: usize,
    },
}

fn default_min_scans() -> usize {
    evidencer_core::cv_engine::MIN_SINGLE_SESSION_SCANS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyEntry {
    pub name: String,
    pub models: Vec<String>,
    /// Within-family prior, in the order of `models`.
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEntry {
    pub id: String,
    /// Precomputed models × voxels cvLME table.
    pub cvlme: Option<PathBuf>,
    /// Subject-level config from which cvLME is computed.
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupEntry {
    pub subjects: Vec<SubjectEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BmaEntry {
    /// Column of every design matrix holding the averaged parameter.
    pub regressor: usize,
    pub name: Option<String>,
    /// Per model, a sessions × voxels CSV of parameter estimates. Posterior
    /// means under the non-informative prior are used when absent.
    pub betas: Option<BTreeMap<String, PathBuf>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VbEntry {
    #[serde(default = "one")]
    pub alpha0: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn one() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-4
}
fn default_max_iter() -> usize {
    200
}

impl Default for VbEntry {
    fn default() -> Self {
        Self {
            alpha0: one(),
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpEntry {
    pub method: Option<String>,
    pub samples: Option<usize>,
    pub rel_tail: Option<f64>,
    /// Models × voxels Dirichlet parameters, used instead of a bms stage.
    pub alpha: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub models: Vec<ModelEntry>,
    /// One response matrix per session.
    #[serde(default)]
    pub data: Vec<PathBuf>,
    #[serde(default)]
    pub precision: PrecisionEntry,
    #[serde(default)]
    pub sessions: SessionsEntry,
    #[serde(default)]
    pub families: Vec<FamilyEntry>,
    pub model_prior: Option<Vec<f64>>,
    pub group: Option<GroupEntry>,
    pub bma: Option<BmaEntry>,
    #[serde(default)]
    pub vb: VbEntry,
    #[serde(default)]
    pub ep: EpEntry,
    pub seed: Option<u64>,
    pub chunk_size: Option<usize>,
    /// Hex SHA-256 of the config file bytes.
    #[serde(skip)]
    pub hash: String,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: Config = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        cfg.hash = hex::encode(Sha256::digest(&bytes));
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for m in &mut self.models {
            m.designs.iter_mut().for_each(|p| resolve(base, p));
        }
        self.data.iter_mut().for_each(|p| resolve(base, p));
        if let PrecisionEntry::Files(files) = &mut self.precision {
            files.iter_mut().for_each(|p| resolve(base, p));
        }
        if let Some(g) = &mut self.group {
            for s in &mut g.subjects {
                s.cvlme.iter_mut().chain(s.config.iter_mut()).for_each(|p| resolve(base, p));
            }
        }
        if let Some(b) = self.bma.as_mut().and_then(|b| b.betas.as_mut()) {
            b.values_mut().for_each(|p| resolve(base, p));
        }
        self.ep.alpha.iter_mut().for_each(|p| resolve(base, p));
    }

    fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                return Err(CliError::config(format!("model name '{}' is not unique", m.name)));
            }
            if m.designs.len() != self.data.len() {
                return Err(CliError::config(format!(
                    "model '{}' lists {} design files for {} data files",
                    m.name,
                    m.designs.len(),
                    self.data.len()
                )));
            }
        }
        if !self.models.is_empty() {
            match self.sessions {
                SessionsEntry::Multi if self.data.len() < 2 => {
                    return Err(CliError::config("layout 'multi' needs at least two data files"));
                }
                SessionsEntry::Single { .. } if self.data.len() != 1 => {
                    return Err(CliError::config("layout 'single' takes exactly one data file"));
                }
                _ => {}
            }
        }
        match &self.precision {
            PrecisionEntry::Keyword(k) if k != "identity" => {
                return Err(CliError::config(format!("unknown precision '{k}', expected \"identity\" or a file list")));
            }
            PrecisionEntry::Files(f) if f.len() != self.data.len() => {
                return Err(CliError::config(format!(
                    "{} precision files for {} data files",
                    f.len(),
                    self.data.len()
                )));
            }
            _ => {}
        }
        for f in &self.families {
            if let Some(m) = f.models.iter().find(|m| !names.contains(m.as_str())) {
                return Err(CliError::config(format!("family '{}' names unknown model '{m}'", f.name)));
            }
        }
        if let Some(p) = &self.model_prior {
            if p.len() != self.models.len() {
                return Err(CliError::config(format!(
                    "model_prior has {} entries for {} models",
                    p.len(),
                    self.models.len()
                )));
            }
        }
        if let Some(g) = &self.group {
            let mut ids = HashSet::new();
            for s in &g.subjects {
                if !ids.insert(s.id.as_str()) {
                    return Err(CliError::config(format!("subject id '{}' is not unique", s.id)));
                }
                if s.cvlme.is_some() == s.config.is_some() {
                    return Err(CliError::config(format!(
                        "subject '{}' needs exactly one of 'cvlme' and 'config'",
                        s.id
                    )));
                }
            }
        }
        if let Some(betas) = self.bma.as_ref().and_then(|b| b.betas.as_ref()) {
            if let Some(m) = betas.keys().find(|m| !names.contains(m.as_str())) {
                return Err(CliError::config(format!("bma betas given for unknown model '{m}'")));
            }
        }
        if self.chunk_size == Some(0) {
            return Err(CliError::config("chunk_size must be positive"));
        }
        Ok(())
    }

    pub fn model_names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.name.clone()).collect()
    }
}
