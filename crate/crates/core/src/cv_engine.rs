//! Cross-validated log model evidence over sessions.
//!
//! Each fold trains a posterior on all sessions but one, starting from the
//! non-informative prior, and scores the held-out session with that posterior
//! as its prior. The posterior after seeing the held-out session is the
//! all-data posterior for every fold, so it is computed once.

use std::ops::Range;

use ndarray::{Array1, Array2, Axis};

use crate::error::{EvidenceError, Result};
use crate::glm_ng::{evidence_parts, posterior_update_stats, EvidenceParts, GlmSpec, SufficientStats, VoxelWisePosterior};
use crate::scalar::Scalar;

/// Smallest scan count accepted by [`split_single_session`].
pub const MIN_SINGLE_SESSION_SCANS: usize = 40;
/// Bounds of the scan gap removed between the two halves of a single session.
pub const DISCARD_RANGE: (usize, usize) = (10, 19);

/// Partition of the scans into cross-validation sessions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionLayout {
    sessions: Vec<Range<usize>>,
    discarded: Vec<usize>,
    total_scans: usize,
}

impl SessionLayout {
    /// Validates that the sessions and discarded scans cover `0..total_scans`
    /// exactly once and that there are at least two sessions.
    pub fn new(sessions: Vec<Range<usize>>, discarded: Vec<usize>, total_scans: usize) -> Result<Self> {
        if sessions.len() < 2 {
            return Err(EvidenceError::Layout(format!(
                "cross-validation needs at least 2 sessions, got {}",
                sessions.len()
            )));
        }
        let mut seen = vec![false; total_scans];
        let scans = sessions.iter().flat_map(|r| r.clone()).chain(discarded.iter().copied());
        for i in scans {
            match seen.get_mut(i) {
                Some(slot) if !*slot => *slot = true,
                Some(_) => return Err(EvidenceError::Layout(format!("scan {i} assigned twice"))),
                None => return Err(EvidenceError::Layout(format!("scan {i} out of range"))),
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(EvidenceError::Layout(format!("scan {missing} not assigned")));
        }
        if sessions.iter().any(|r| r.is_empty()) {
            return Err(EvidenceError::Layout("empty session".into()));
        }
        Ok(Self {
            sessions,
            discarded,
            total_scans,
        })
    }

    /// Consecutive sessions of the given lengths with nothing discarded.
    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        let mut start = 0;
        let sessions = lengths
            .iter()
            .map(|&len| {
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Self::new(sessions, Vec::new(), start)
    }

    pub fn sessions(&self) -> &[Range<usize>] {
        &self.sessions
    }

    pub fn discarded(&self) -> &[usize] {
        &self.discarded
    }

    pub fn folds(&self) -> usize {
        self.sessions.len()
    }

    pub fn total_scans(&self) -> usize {
        self.total_scans
    }

    /// Splits one concatenated session into the layout's sessions.
    pub fn split<T: Scalar>(&self, spec: &GlmSpec<T>) -> Result<Vec<GlmSpec<T>>> {
        if spec.scans() != self.total_scans {
            return Err(EvidenceError::dim(format!(
                "layout covers {} scans but the data has {}",
                self.total_scans,
                spec.scans()
            )));
        }
        self.sessions
            .iter()
            .map(|r| spec.select_scans(&r.clone().collect::<Vec<_>>()))
            .collect()
    }
}

/// Split-half layout for a single session of `n` scans.
pub fn split_single_session(n: usize) -> Result<SessionLayout> {
    split_single_session_with_min(n, MIN_SINGLE_SESSION_SCANS)
}

/// [`split_single_session`] with a custom minimum scan count.
///
/// Discards the smallest `d` in 10..=19 that leaves an even number of scans,
/// taken from the middle, and returns the two equal halves on either side.
pub fn split_single_session_with_min(n: usize, min_scans: usize) -> Result<SessionLayout> {
    let (lo, hi) = DISCARD_RANGE;
    if n < min_scans.max(hi + 2) {
        return Err(EvidenceError::Layout(format!(
            "single-session split needs at least {} scans, got {n}",
            min_scans.max(hi + 2)
        )));
    }
    let d = (lo..=hi)
        .find(|d| (n - d).is_multiple_of(2))
        .expect("two consecutive gap sizes cover both parities");
    let half = (n - d) / 2;
    SessionLayout::new(vec![0..half, half + d..n], (half..half + d).collect(), n)
}

/// Cross-validated evidences of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCv<T> {
    pub cv_lme: Array1<T>,
    pub cv_acc: Array1<T>,
    pub cv_com: Array1<T>,
    /// One entry per fold.
    pub folds: Vec<EvidenceParts<T>>,
}

/// Cross-validated evidences of a model space, models × voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult<T> {
    pub cv_lme: Array2<T>,
    pub cv_acc: Array2<T>,
    pub cv_com: Array2<T>,
    pub oos_lme: Vec<Array2<T>>,
    pub oos_acc: Vec<Array2<T>>,
    pub oos_com: Vec<Array2<T>>,
}

impl<T: Scalar> CvResult<T> {
    /// Stacks per-model results in model order.
    pub fn from_models(models: &[ModelCv<T>]) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| EvidenceError::dim("model space is empty"))?;
        let folds = first.folds.len();
        if models.iter().any(|m| m.folds.len() != folds || m.cv_lme.len() != first.cv_lme.len()) {
            return Err(EvidenceError::dim("models disagree in fold or voxel count"));
        }
        let stack = |f: &dyn Fn(&ModelCv<T>) -> &Array1<T>| -> Array2<T> {
            let views: Vec<_> = models.iter().map(|m| f(m).view()).collect();
            ndarray::stack(Axis(0), &views).expect("equal voxel counts")
        };
        Ok(Self {
            cv_lme: stack(&|m| &m.cv_lme),
            cv_acc: stack(&|m| &m.cv_acc),
            cv_com: stack(&|m| &m.cv_com),
            oos_lme: (0..folds).map(|i| stack(&|m| &m.folds[i].lme)).collect(),
            oos_acc: (0..folds).map(|i| stack(&|m| &m.folds[i].acc)).collect(),
            oos_com: (0..folds).map(|i| stack(&|m| &m.folds[i].com)).collect(),
        })
    }

    pub fn models(&self) -> usize {
        self.cv_lme.nrows()
    }

    pub fn voxels(&self) -> usize {
        self.cv_lme.ncols()
    }

    pub fn folds(&self) -> usize {
        self.oos_lme.len()
    }
}

fn session_stats<T: Scalar>(sessions: &[GlmSpec<T>]) -> Result<Vec<SufficientStats<T>>> {
    if sessions.len() < 2 {
        return Err(EvidenceError::Layout(format!(
            "cross-validation needs at least 2 sessions, got {}",
            sessions.len()
        )));
    }
    let (p, v) = (sessions[0].regressors(), sessions[0].voxels());
    if let Some(bad) = sessions.iter().position(|s| s.regressors() != p || s.voxels() != v) {
        return Err(EvidenceError::dim(format!(
            "session {bad} has {} regressors and {} voxels, session 0 has {p} and {v}",
            sessions[bad].regressors(),
            sessions[bad].voxels()
        )));
    }
    Ok(sessions.iter().map(GlmSpec::sufficient_stats).collect())
}

/// Statistics of every session except `fold`.
fn complement<T: Scalar>(stats: &[SufficientStats<T>], fold: usize) -> Result<SufficientStats<T>> {
    let (p, v) = (stats[0].regressors(), stats[0].voxels());
    SufficientStats::sum(p, v, stats.iter().enumerate().filter(|(j, _)| *j != fold).map(|(_, s)| s))
}

/// Out-of-sample evidence, accuracy and complexity of session `fold`.
pub fn oos_lme<T: Scalar>(sessions: &[GlmSpec<T>], fold: usize) -> Result<EvidenceParts<T>> {
    let stats = session_stats(sessions)?;
    if fold >= stats.len() {
        return Err(EvidenceError::Layout(format!(
            "fold {fold} out of range for {} sessions",
            stats.len()
        )));
    }
    let (p, v) = (stats[0].regressors(), stats[0].voxels());
    let flat = VoxelWisePosterior::non_informative(p, v);
    let all = SufficientStats::sum(p, v, &stats)?;
    let post = posterior_update_stats(&all, &flat)?;
    fold_parts(&stats, fold, &flat, &post)
}

fn fold_parts<T: Scalar>(
    stats: &[SufficientStats<T>],
    fold: usize,
    flat: &VoxelWisePosterior<T>,
    post: &VoxelWisePosterior<T>,
) -> Result<EvidenceParts<T>> {
    let train = posterior_update_stats(&complement(stats, fold)?, flat)?;
    evidence_parts(&stats[fold], &train, post)
}

/// Cross-validated evidence of one model from its per-session data.
pub fn cv_lme<T: Scalar>(sessions: &[GlmSpec<T>]) -> Result<ModelCv<T>> {
    let stats = session_stats(sessions)?;
    let (p, v) = (stats[0].regressors(), stats[0].voxels());
    let flat = VoxelWisePosterior::non_informative(p, v);
    let all = SufficientStats::sum(p, v, &stats)?;
    let post = posterior_update_stats(&all, &flat)?;
    let folds = (0..stats.len())
        .map(|i| fold_parts(&stats, i, &flat, &post))
        .collect::<Result<Vec<_>>>()?;
    let total = |f: &dyn Fn(&EvidenceParts<T>) -> &Array1<T>| {
        folds.iter().skip(1).fold(f(&folds[0]).clone(), |acc, part| acc + f(part))
    };
    Ok(ModelCv {
        cv_lme: total(&|f| &f.lme),
        cv_acc: total(&|f| &f.acc),
        cv_com: total(&|f| &f.com),
        folds,
    })
}

/// Cross-validated evidences for every model; `models[m]` holds model `m`'s
/// sessions.
pub fn cv_lme_models<T: Scalar>(models: &[Vec<GlmSpec<T>>]) -> Result<CvResult<T>> {
    let per_model = models.iter().map(|s| cv_lme(s)).collect::<Result<Vec<_>>>()?;
    CvResult::from_models(&per_model)
}
