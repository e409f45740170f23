//! Loading the model space described by a config into memory.

use std::ops::Range;

use evidencer_core::cv_engine::{cv_lme_models, split_single_session_with_min, SessionLayout};
use evidencer_core::glm_ng::{posterior_update, GlmSpec, Precision, VoxelWisePosterior};
use evidencer_core::CvResult;
use ndarray::{concatenate, s, Array1, Array2, Axis};
use rayon::prelude::*;

use crate::config::{Config, PrecisionEntry, SessionsEntry};
use crate::error::{CliError, Result};
use crate::io::{load_matrix, voxel_labels};

#[derive(Debug, Clone)]
pub struct SessionData {
    pub y: Array2<f64>,
    pub precision: Precision<f64>,
}

/// Responses, precisions and per-model designs of one subject.
#[derive(Debug, Clone)]
pub struct ModelSpace {
    pub names: Vec<String>,
    /// `designs[m][s]` is model `m`'s design for data file `s`.
    pub designs: Vec<Vec<Array2<f64>>>,
    pub sessions: Vec<SessionData>,
    pub voxel_labels: Vec<String>,
    /// Split of a single data file into halves, if configured.
    pub layout: Option<SessionLayout>,
}

fn load_precision(path: &std::path::Path, n: usize) -> Result<Precision<f64>> {
    let m = load_matrix(path)?.values;
    match m.dim() {
        (r, c) if r == n && c == n => Ok(Precision::Full(m)),
        (r, 1) if r == n => Ok(Precision::Diagonal(m.column(0).to_owned())),
        (1, c) if c == n => Ok(Precision::Diagonal(m.row(0).to_owned())),
        (r, c) => Err(CliError::config(format!(
            "{}: precision is {r}×{c}, expected {n}×{n} or a diagonal of length {n}",
            path.display()
        ))),
    }
}

impl ModelSpace {
    pub fn load(cfg: &Config) -> Result<Self> {
        if cfg.models.is_empty() {
            return Err(CliError::config("no models configured"));
        }
        let mut sessions = Vec::with_capacity(cfg.data.len());
        let mut labels = None;
        for (s, path) in cfg.data.iter().enumerate() {
            let data = load_matrix(path)?;
            let n = data.rows();
            if let Some(first) = sessions.first().map(|d: &SessionData| d.y.ncols()) {
                if data.cols() != first {
                    return Err(CliError::config(format!(
                        "{}: {} voxels, session 1 has {first}",
                        path.display(),
                        data.cols()
                    )));
                }
            }
            if labels.is_none() {
                labels = data.col_labels.clone();
            }
            let precision = match &cfg.precision {
                PrecisionEntry::Files(files) => load_precision(&files[s], n)?,
                _ => Precision::Identity,
            };
            sessions.push(SessionData { y: data.values, precision });
        }
        let voxels = sessions[0].y.ncols();
        let mut designs = Vec::with_capacity(cfg.models.len());
        for m in &cfg.models {
            let mut per_session = Vec::with_capacity(m.designs.len());
            for (path, sess) in m.designs.iter().zip(&sessions) {
                let x = load_matrix(path)?.values;
                if x.nrows() != sess.y.nrows() {
                    return Err(CliError::config(format!(
                        "{}: {} rows, data has {} scans",
                        path.display(),
                        x.nrows(),
                        sess.y.nrows()
                    )));
                }
                per_session.push(x);
            }
            designs.push(per_session);
        }
        let layout = match cfg.sessions {
            SessionsEntry::Single { min_scans } => Some(split_single_session_with_min(sessions[0].y.nrows(), min_scans)?),
            SessionsEntry::Multi => None,
        };
        let space = Self {
            names: cfg.model_names(),
            designs,
            sessions,
            voxel_labels: labels.unwrap_or_else(|| voxel_labels(voxels)),
            layout,
        };
        // validates every design once, on a single voxel
        space.specs(0..voxels.min(1))?;
        Ok(space)
    }

    pub fn voxels(&self) -> usize {
        self.sessions[0].y.ncols()
    }

    pub fn models(&self) -> usize {
        self.names.len()
    }

    /// Cross-validation folds.
    pub fn folds(&self) -> usize {
        self.layout.as_ref().map_or(self.sessions.len(), SessionLayout::folds)
    }

    /// Per model, the cross-validation sessions restricted to `voxels`.
    pub fn specs(&self, voxels: Range<usize>) -> Result<Vec<Vec<GlmSpec<f64>>>> {
        let mut out = Vec::with_capacity(self.models());
        for designs in &self.designs {
            let mut specs = Vec::with_capacity(designs.len());
            for (x, sess) in designs.iter().zip(&self.sessions) {
                let y = sess.y.slice(s![.., voxels.clone()]).to_owned();
                specs.push(GlmSpec::new(y, x.clone(), sess.precision.clone())?);
            }
            if let Some(layout) = &self.layout {
                specs = layout.split(&specs[0])?;
            }
            out.push(specs);
        }
        Ok(out)
    }
}

/// Splits `0..voxels` into consecutive chunks.
pub fn chunks(voxels: usize, size: usize) -> Vec<Range<usize>> {
    (0..voxels).step_by(size.max(1)).map(|a| a..(a + size).min(voxels)).collect()
}

/// Cross-validated evidences plus, when `regressor` is given, per-session
/// posterior means of that regressor (models × sessions × voxels as a list of
/// sessions × voxels matrices).
pub struct CvOutput {
    pub cv: CvResult<f64>,
    pub betas: Option<Vec<Array2<f64>>>,
}

fn session_betas(specs: &[Vec<GlmSpec<f64>>], regressor: usize) -> Result<Vec<Array2<f64>>> {
    specs
        .iter()
        .map(|sessions| {
            let rows = sessions
                .iter()
                .map(|spec| {
                    if regressor >= spec.regressors() {
                        return Err(CliError::config(format!(
                            "bma regressor {regressor} exceeds the {} design columns",
                            spec.regressors()
                        )));
                    }
                    let flat = VoxelWisePosterior::non_informative(spec.regressors(), spec.voxels());
                    let post = posterior_update(spec, &flat)?;
                    Ok(post.mu.row(regressor).to_owned())
                })
                .collect::<Result<Vec<Array1<f64>>>>()?;
            let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
            Ok(ndarray::stack(Axis(0), &views).expect("equal voxel counts"))
        })
        .collect()
}

fn concat_cols(parts: &[&Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
    concatenate(Axis(1), &views).expect("chunks share the row count")
}

/// Runs cross-validation chunk by chunk; chunks are processed in parallel and
/// stitched in voxel order.
pub fn compute_cv(space: &ModelSpace, chunk_size: usize, regressor: Option<usize>) -> Result<CvOutput> {
    let parts = chunks(space.voxels(), chunk_size)
        .into_par_iter()
        .map(|range| {
            let specs = space.specs(range)?;
            let cv = cv_lme_models(&specs)?;
            let betas = regressor.map(|r| session_betas(&specs, r)).transpose()?;
            Ok((cv, betas))
        })
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: &dyn Fn(&CvResult<f64>) -> &Array2<f64>| -> Array2<f64> {
        concat_cols(&parts.iter().map(|(cv, _)| f(cv)).collect::<Vec<_>>())
    };
    let folds = parts[0].0.folds();
    let cv = CvResult {
        cv_lme: pick(&|c| &c.cv_lme),
        cv_acc: pick(&|c| &c.cv_acc),
        cv_com: pick(&|c| &c.cv_com),
        oos_lme: (0..folds).map(|i| pick(&|c| &c.oos_lme[i])).collect(),
        oos_acc: (0..folds).map(|i| pick(&|c| &c.oos_acc[i])).collect(),
        oos_com: (0..folds).map(|i| pick(&|c| &c.oos_com[i])).collect(),
    };
    let betas = regressor.map(|_| {
        (0..space.models())
            .map(|m| {
                concat_cols(
                    &parts
                        .iter()
                        .map(|(_, b)| &b.as_ref().expect("betas computed per chunk")[m])
                        .collect::<Vec<_>>(),
                )
            })
            .collect()
    });
    Ok(CvOutput { cv, betas })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_ranges_cover_voxels() {
        assert_eq!(chunks(10, 4), vec![0..4, 4..8, 8..10]);
        assert_eq!(chunks(4, 4096), vec![0..4]);
        assert!(chunks(0, 3).is_empty());
    }
}
