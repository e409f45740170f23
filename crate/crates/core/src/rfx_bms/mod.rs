//! Random-effects Bayesian model selection: a variational Dirichlet posterior
//! over model frequencies per voxel, and its exceedance probabilities.

mod exceedance;
mod sampler;

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{EvidenceError, Result};
use crate::scalar::Scalar;
use crate::special::digamma_unchecked;

pub use exceedance::{
    ep_beta_closed_form, ep_integration, ep_sampling, ep_sampling_stream, exceedance_probabilities, EpMethod,
    EpStats, ExceedanceMap, IntegratedEp, DEFAULT_REL_TAIL, DEFAULT_SAMPLES, MIN_SAMPLES, PANEL_TOLERANCE,
};
pub use sampler::GammaSampler;

/// Log model evidences of a group: subjects × models × voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLmeStack<T> {
    lme: Array3<T>,
    subject_ids: Vec<String>,
}

impl<T: Scalar> GroupLmeStack<T> {
    pub fn new(lme: Array3<T>, subject_ids: Vec<String>) -> Result<Self> {
        let (n, k, _) = lme.dim();
        if n < 2 || k < 2 {
            return Err(EvidenceError::domain(format!(
                "group model selection needs at least 2 subjects and 2 models, got {n} and {k}"
            )));
        }
        if subject_ids.len() != n {
            return Err(EvidenceError::dim(format!(
                "{} subject ids for {n} subjects",
                subject_ids.len()
            )));
        }
        if lme.iter().any(|v| !v.is_finite()) {
            return Err(EvidenceError::domain("group log model evidences must be finite"));
        }
        Ok(Self { lme, subject_ids })
    }

    /// Stacks per-subject models × voxels matrices in the given order.
    pub fn from_subjects(subject_ids: Vec<String>, subjects: &[Array2<T>]) -> Result<Self> {
        let first = subjects
            .first()
            .ok_or_else(|| EvidenceError::dim("no subjects"))?;
        if let Some(i) = subjects.iter().position(|s| s.dim() != first.dim()) {
            return Err(EvidenceError::dim(format!(
                "subject {i} has shape {:?}, subject 0 has {:?}",
                subjects[i].dim(),
                first.dim()
            )));
        }
        let views: Vec<_> = subjects.iter().map(|s| s.view()).collect();
        let lme = ndarray::stack(Axis(0), &views).expect("shapes checked");
        Self::new(lme, subject_ids)
    }

    pub fn lme(&self) -> &Array3<T> {
        &self.lme
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn subjects(&self) -> usize {
        self.lme.dim().0
    }

    pub fn models(&self) -> usize {
        self.lme.dim().1
    }

    pub fn voxels(&self) -> usize {
        self.lme.dim().2
    }
}

/// Settings of the variational fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfxOptions<T> {
    /// Prior concentration of every model.
    pub alpha0: T,
    /// Stop once `max |Δα| < tol`.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for RfxOptions<T> {
    fn default() -> Self {
        Self {
            alpha0: T::one(),
            tol: T::lit(1e-4),
            max_iter: 200,
        }
    }
}

impl<T: Scalar> RfxOptions<T> {
    fn validate(&self) -> Result<()> {
        if !(self.alpha0 > T::zero()) || !self.alpha0.is_finite() {
            return Err(EvidenceError::domain(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if !(self.tol > T::zero()) {
            return Err(EvidenceError::domain(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(EvidenceError::domain("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Fit of a single voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelRfx<T> {
    pub alpha: Array1<T>,
    pub iterations: usize,
    pub converged: bool,
}

/// One variational update for a subjects × models block of log evidences:
/// responsibilities `gₙⱼ ∝ exp(LMEₙⱼ + ψ(αⱼ) − ψ(Σα))`, then
/// `αⱼ = α₀ + Σₙ gₙⱼ`.
pub fn vb_update<T: Scalar>(lme: ArrayView2<'_, T>, alpha: &Array1<T>, alpha0: T) -> Array1<T> {
    let psi_total = digamma_unchecked(alpha.sum());
    let log_prior: Array1<T> = alpha.mapv(|a| digamma_unchecked(a) - psi_total);
    let mut counts = Array1::<T>::zeros(alpha.len());
    let mut log_u = Array1::<T>::zeros(alpha.len());
    for row in lme.axis_iter(Axis(0)) {
        log_u.assign(&(&row + &log_prior));
        let max = log_u.fold(T::neg_infinity(), |m, &v| m.max(v));
        log_u.mapv_inplace(|v| (v - max).exp());
        let norm = log_u.sum();
        counts.scaled_add(norm.recip(), &log_u);
    }
    counts + alpha0
}

/// Iterates [`vb_update`] from `α = α₀` until convergence.
pub fn estimate_rfx_voxel<T: Scalar>(lme: ArrayView2<'_, T>, opts: &RfxOptions<T>) -> Result<VoxelRfx<T>> {
    opts.validate()?;
    let mut alpha = Array1::from_elem(lme.ncols(), opts.alpha0);
    for iter in 1..=opts.max_iter {
        let next = vb_update(lme, &alpha, opts.alpha0);
        let change = (&next - &alpha).fold(T::zero(), |m, d| m.max(d.abs()));
        alpha = next;
        if change < opts.tol {
            return Ok(VoxelRfx {
                alpha,
                iterations: iter,
                converged: true,
            });
        }
    }
    Ok(VoxelRfx {
        alpha,
        iterations: opts.max_iter,
        converged: false,
    })
}

/// Voxel-wise Dirichlet concentrations (models × voxels) and convergence flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RfxEstimate<T> {
    pub alpha: Array2<T>,
    pub alpha0: T,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

/// Variational RFX BMS for every voxel of the group. Non-convergence is
/// reported per voxel, not raised.
pub fn estimate_rfx<T: Scalar>(group: &GroupLmeStack<T>, opts: &RfxOptions<T>) -> Result<RfxEstimate<T>> {
    opts.validate()?;
    let fits = (0..group.voxels())
        .into_par_iter()
        .map(|v| estimate_rfx_voxel(group.lme.index_axis(Axis(2), v), opts))
        .collect::<Result<Vec<_>>>()?;
    let mut alpha = Array2::zeros((group.models(), group.voxels()));
    for (v, fit) in fits.iter().enumerate() {
        alpha.column_mut(v).assign(&fit.alpha);
    }
    Ok(RfxEstimate {
        alpha,
        alpha0: opts.alpha0,
        iterations: fits.iter().map(|f| f.iterations).collect(),
        converged: fits.iter().map(|f| f.converged).collect(),
    })
}

/// Dirichlet posterior over model frequencies with expected frequencies and
/// exceedance probabilities, all models × voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPosterior<T> {
    pub alpha: Array2<T>,
    pub alpha0: T,
    pub expected_freq: Array2<T>,
    pub ep: Array2<T>,
    pub ep_deviation: Array1<T>,
    pub converged: Vec<bool>,
}

impl<T: Scalar> DirichletPosterior<T> {
    pub fn from_estimate(est: RfxEstimate<T>, method: EpMethod<T>, stream_offset: u64) -> Result<Self> {
        let totals = est.alpha.sum_axis(Axis(0));
        let expected_freq = &est.alpha / &totals.insert_axis(Axis(0));
        let eps = exceedance_probabilities(est.alpha.view(), method, stream_offset)?;
        Ok(Self {
            alpha: est.alpha,
            alpha0: est.alpha0,
            expected_freq,
            ep: eps.ep,
            ep_deviation: eps.deviation,
            converged: est.converged,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn symmetric_input_fixed_point() {
        let lme = Array2::from_elem((6, 3), -42.0_f64);
        let fit = estimate_rfx_voxel(lme.view(), &RfxOptions::default()).unwrap();
        assert!(fit.converged);
        for a in fit.alpha.iter() {
            assert!((a - (1.0 + 6.0 / 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_model_saturates() {
        let mut lme = Array2::from_elem((5, 3), -100.0_f64);
        lme.column_mut(1).mapv_inplace(|v| v + 50.0);
        let fit = estimate_rfx_voxel(lme.view(), &RfxOptions::default()).unwrap();
        assert!((fit.alpha[1] - 6.0).abs() < 1e-6);
        assert!((fit.alpha[0] - 1.0).abs() < 1e-6);
        assert!((fit.alpha[2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mass_is_conserved_each_step() {
        let lme = array![[-3.0_f64, -1.0, -2.5], [-0.2, -4.0, -1.0], [-2.0, -2.1, -1.9], [0.0, -7.0, -3.0]];
        let mut alpha = Array1::from_elem(3, 0.5);
        for _ in 0..20 {
            alpha = vb_update(lme.view(), &alpha, 0.5);
            assert!((alpha.sum() - (3.0 * 0.5 + 4.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn non_convergence_is_flagged() {
        let lme = array![[-3.0_f64, -1.0], [-0.2, -4.0], [-1.0, -1.5]];
        let opts = RfxOptions {
            max_iter: 1,
            tol: 1e-300,
            ..RfxOptions::default()
        };
        let fit = estimate_rfx_voxel(lme.view(), &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn stack_validation() {
        assert!(GroupLmeStack::new(Array3::<f64>::zeros((1, 2, 3)), vec!["a".into()]).is_err());
        assert!(GroupLmeStack::new(Array3::<f64>::zeros((2, 1, 3)), vec!["a".into(), "b".into()]).is_err());
        assert!(GroupLmeStack::new(Array3::<f64>::zeros((2, 2, 3)), vec!["a".into()]).is_err());
        let mut bad = Array3::<f64>::zeros((2, 2, 1));
        bad[[0, 0, 0]] = f64::NAN;
        assert!(GroupLmeStack::new(bad, vec!["a".into(), "b".into()]).is_err());
    }
}
