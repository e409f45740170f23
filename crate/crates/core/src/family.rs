//! Log family evidences from per-model log evidences.

use ndarray::{Array2, ArrayView2};

use crate::error::{EvidenceError, Result};
use crate::scalar::Scalar;
use crate::special::log_sum_exp_iter;

/// Disjoint families covering a model space, with optional within-family
/// prior weights (uniform when absent).
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyPartition<T> {
    names: Vec<String>,
    members: Vec<Vec<usize>>,
    weights: Vec<Option<Vec<T>>>,
    models: usize,
}

impl<T: Scalar> FamilyPartition<T> {
    /// Families with uniform within-family priors.
    pub fn uniform(models: usize, families: Vec<(String, Vec<usize>)>) -> Result<Self> {
        let with_weights = families.into_iter().map(|(n, m)| (n, m, None)).collect();
        Self::new(models, with_weights)
    }

    /// `families` lists `(name, member model indices, optional weights)`.
    /// Weights must be non-negative and sum to one; a zero weight removes the
    /// model from its family.
    pub fn new(models: usize, families: Vec<(String, Vec<usize>, Option<Vec<T>>)>) -> Result<Self> {
        let mut owner = vec![None; models];
        let mut names = Vec::with_capacity(families.len());
        let mut members = Vec::with_capacity(families.len());
        let mut weights = Vec::with_capacity(families.len());
        for (f, (name, ms, w)) in families.into_iter().enumerate() {
            if ms.is_empty() {
                return Err(EvidenceError::domain(format!("family '{name}' is empty")));
            }
            for &m in &ms {
                match owner.get_mut(m) {
                    None => {
                        return Err(EvidenceError::domain(format!(
                            "family '{name}' references model {m} of {models}"
                        )))
                    }
                    Some(Some(_)) => {
                        return Err(EvidenceError::domain(format!(
                            "model {m} belongs to more than one family"
                        )))
                    }
                    Some(slot) => *slot = Some(f),
                }
            }
            if let Some(w) = &w {
                if w.len() != ms.len() {
                    return Err(EvidenceError::dim(format!(
                        "family '{name}' has {} models but {} weights",
                        ms.len(),
                        w.len()
                    )));
                }
                if w.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
                    return Err(EvidenceError::domain(format!("family '{name}' has negative weights")));
                }
                let total: T = w.iter().copied().sum();
                if (total - T::one()).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(8.0)) {
                    return Err(EvidenceError::domain(format!(
                        "weights of family '{name}' sum to {total}, not 1"
                    )));
                }
            }
            names.push(name);
            members.push(ms);
            weights.push(w);
        }
        if let Some(m) = owner.iter().position(Option::is_none) {
            return Err(EvidenceError::domain(format!("model {m} is not in any family")));
        }
        Ok(Self {
            names,
            members,
            weights,
            models,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn members(&self, family: usize) -> &[usize] {
        &self.members[family]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn models(&self) -> usize {
        self.models
    }
}

/// Log family evidence per family and voxel (families × voxels).
///
/// Uses `L* + ln Σ exp(LME − L*) − ln M_f` with `L*` the family maximum. With
/// non-uniform weights the evidences are first shifted by
/// `ln p(m|f) + ln M_f`.
pub fn log_family_evidence<T: Scalar>(lme: ArrayView2<'_, T>, part: &FamilyPartition<T>) -> Result<Array2<T>> {
    if lme.nrows() != part.models() {
        return Err(EvidenceError::dim(format!(
            "{} LME rows for a partition of {} models",
            lme.nrows(),
            part.models()
        )));
    }
    if lme.iter().any(|v| !v.is_finite()) {
        return Err(EvidenceError::domain("log model evidences must be finite"));
    }
    let voxels = lme.ncols();
    let mut out = Array2::zeros((part.len(), voxels));
    let mut shifted = Vec::new();
    for f in 0..part.len() {
        let members = &part.members[f];
        let log_count = T::from_usize_lossy(members.len()).ln();
        let offsets: Vec<T> = match &part.weights[f] {
            None => vec![T::zero(); members.len()],
            Some(w) => w.iter().map(|&p| p.ln() + log_count).collect(),
        };
        for v in 0..voxels {
            shifted.clear();
            shifted.extend(members.iter().zip(&offsets).map(|(&m, &o)| lme[[m, v]] + o));
            let lfe = log_sum_exp_iter(shifted.iter().copied()) - log_count;
            if lfe == T::neg_infinity() {
                return Err(EvidenceError::domain(format!(
                    "family '{}' has no model with positive prior weight",
                    part.names[f]
                )));
            }
            out[[f, v]] = lfe;
        }
    }
    Ok(out)
}
