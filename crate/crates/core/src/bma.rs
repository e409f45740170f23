//! Cross-validated Bayesian model averaging of first-level parameter
//! estimates.

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis, Zip};

use crate::error::{EvidenceError, Result};
use crate::scalar::Scalar;

/// Posterior model probabilities, models × voxels, with the model prior used.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorProbs<T> {
    pub pp: Array2<T>,
    pub prior: Array1<T>,
}

impl<T: Scalar> PosteriorProbs<T> {
    pub fn models(&self) -> usize {
        self.pp.nrows()
    }

    pub fn voxels(&self) -> usize {
        self.pp.ncols()
    }
}

/// Posterior model probabilities from log evidences (models × voxels).
///
/// The voxel-wise mean LME is subtracted before exponentiating, so only LME
/// differences matter. `prior` defaults to uniform.
pub fn posterior_probabilities<T: Scalar>(lme: ArrayView2<'_, T>, prior: Option<&[T]>) -> Result<PosteriorProbs<T>> {
    let (models, voxels) = lme.dim();
    if models == 0 {
        return Err(EvidenceError::dim("no models"));
    }
    let prior = match prior {
        None => Array1::from_elem(models, T::from_usize_lossy(models).recip()),
        Some(p) => {
            if p.len() != models {
                return Err(EvidenceError::dim(format!("{} prior weights for {models} models", p.len())));
            }
            if p.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
                return Err(EvidenceError::domain("model prior must be non-negative"));
            }
            let total: T = p.iter().copied().sum();
            if (total - T::one()).abs() > T::lit(1e-10).max(T::epsilon() * T::lit(16.0)) {
                return Err(EvidenceError::domain(format!("model prior sums to {total}, not 1")));
            }
            Array1::from(p.to_vec())
        }
    };
    if lme.iter().any(|v| !v.is_finite()) {
        return Err(EvidenceError::domain("log model evidences must be finite"));
    }
    let mean = lme.mean_axis(Axis(0)).expect("at least one model");
    let mut pp = &lme - &mean.insert_axis(Axis(0));
    pp.mapv_inplace(|v| v.exp());
    for (v, mut col) in pp.axis_iter_mut(Axis(1)).enumerate() {
        if col.iter().any(|x| !x.is_finite()) {
            // spread too wide for the mean shift; the maximum shift cannot overflow
            let raw = lme.column(v);
            let max = raw.fold(T::neg_infinity(), |m, &x| m.max(x));
            col.assign(&raw.mapv(|x| (x - max).exp()));
        }
        Zip::from(&mut col).and(&prior).for_each(|x, &w| *x *= w);
        let total = col.sum();
        if !(total > T::zero()) {
            return Err(EvidenceError::domain(format!(
                "posterior probabilities at voxel {v} vanish for every model"
            )));
        }
        col.mapv_inplace(|x| x / total);
    }
    debug_assert_eq!(pp.dim(), (models, voxels));
    Ok(PosteriorProbs { pp, prior })
}

/// First-level estimates of one regressor: models × sessions × voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaStack<T> {
    beta_hat: Array3<T>,
    regressor: String,
}

impl<T: Scalar> BetaStack<T> {
    pub fn new(beta_hat: Array3<T>, regressor: impl Into<String>) -> Result<Self> {
        let (m, s, _) = beta_hat.dim();
        if m == 0 || s == 0 {
            return Err(EvidenceError::dim("parameter estimates need at least one model and session"));
        }
        if beta_hat.iter().any(|v| !v.is_finite()) {
            return Err(EvidenceError::domain("parameter estimates must be finite"));
        }
        Ok(Self {
            beta_hat,
            regressor: regressor.into(),
        })
    }

    /// Stacks per-model sessions × voxels matrices.
    pub fn from_models(models: &[Array2<T>], regressor: impl Into<String>) -> Result<Self> {
        let first = models.first().ok_or_else(|| EvidenceError::dim("no models"))?;
        if models.iter().any(|m| m.dim() != first.dim()) {
            return Err(EvidenceError::dim("models disagree in session or voxel count"));
        }
        let views: Vec<_> = models.iter().map(|m| m.view()).collect();
        Self::new(ndarray::stack(Axis(0), &views).expect("shapes checked"), regressor)
    }

    pub fn beta_hat(&self) -> &Array3<T> {
        &self.beta_hat
    }

    pub fn regressor(&self) -> &str {
        &self.regressor
    }

    pub fn models(&self) -> usize {
        self.beta_hat.dim().0
    }

    pub fn sessions(&self) -> usize {
        self.beta_hat.dim().1
    }

    pub fn voxels(&self) -> usize {
        self.beta_hat.dim().2
    }

    /// Session-averaged estimates, models × voxels.
    pub fn session_mean(&self) -> Array2<T> {
        self.beta_hat.mean_axis(Axis(1)).expect("at least one session")
    }
}

fn check_axes<T: Scalar>(betas: &BetaStack<T>, pp: &PosteriorProbs<T>) -> Result<()> {
    if pp.pp.dim() != (betas.models(), betas.voxels()) {
        return Err(EvidenceError::dim(format!(
            "posterior probabilities are {:?}, estimates are {} models × {} voxels",
            pp.pp.dim(),
            betas.models(),
            betas.voxels()
        )));
    }
    Ok(())
}

/// Session-wide averaging: average each model's estimates over sessions, then
/// weight by cvLME-based posterior probabilities.
pub fn cv_bma<T: Scalar>(betas: &BetaStack<T>, pp: &PosteriorProbs<T>) -> Result<Array1<T>> {
    check_axes(betas, pp)?;
    Ok((&betas.session_mean() * &pp.pp).sum_axis(Axis(0)))
}

/// Session-wise averaging: weight each session's estimates by that fold's
/// posterior probabilities, then average over sessions.
pub fn oos_bma<T: Scalar>(betas: &BetaStack<T>, per_session: &[PosteriorProbs<T>]) -> Result<Array1<T>> {
    if per_session.len() != betas.sessions() {
        return Err(EvidenceError::dim(format!(
            "{} posterior probability sets for {} sessions",
            per_session.len(),
            betas.sessions()
        )));
    }
    let mut total = Array1::zeros(betas.voxels());
    for (j, pp) in per_session.iter().enumerate() {
        check_axes(betas, pp)?;
        let session = betas.beta_hat.index_axis(Axis(1), j);
        total += &(&session * &pp.pp).sum_axis(Axis(0));
    }
    Ok(total / T::from_usize_lossy(betas.sessions()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pp_of(values: Array2<f64>) -> PosteriorProbs<f64> {
        let m = values.nrows();
        PosteriorProbs {
            pp: values,
            prior: Array1::from_elem(m, 1.0 / m as f64),
        }
    }

    #[test]
    fn two_model_probabilities() {
        let pp = posterior_probabilities(array![[0.0_f64, 1.0, 5.0], [0.0, 0.0, 0.0]].view(), None).unwrap();
        assert_eq!(pp.pp[[0, 0]], 0.5);
        assert!((pp.pp[[0, 1]] - 0.7311).abs() < 5e-4);
        assert!((pp.pp[[1, 1]] - 0.2689).abs() < 5e-4);
        assert!((pp.pp[[0, 2]] - 0.9933).abs() < 5e-4);
        assert!((pp.pp[[1, 2]] - 0.0067).abs() < 5e-4);
    }

    #[test]
    fn single_model_is_certain() {
        let pp = posterior_probabilities(array![[-1e5_f64, 3.0]].view(), None).unwrap();
        assert_eq!(pp.pp, array![[1.0, 1.0]]);
    }

    #[test]
    fn wide_spread_does_not_overflow() {
        let pp = posterior_probabilities(array![[0.0_f64], [-1400.0], [-5000.0]].view(), None).unwrap();
        assert_eq!(pp.pp[[0, 0]], 1.0);
        assert!(pp.pp.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn prior_validation_and_masking() {
        let lme = array![[0.0_f64], [1.0]];
        assert!(posterior_probabilities(lme.view(), Some(&[0.5, 0.6])).is_err());
        assert!(posterior_probabilities(lme.view(), Some(&[1.0])).is_err());
        let pp = posterior_probabilities(lme.view(), Some(&[1.0, 0.0])).unwrap();
        assert_eq!(pp.pp[[0, 0]], 1.0);
    }

    #[test]
    fn averaging_examples() {
        // session means (3, 7)
        let betas = BetaStack::new(array![[[2.0], [4.0]], [[6.0], [8.0]]], "x").unwrap();
        assert_eq!(cv_bma(&betas, &pp_of(array![[1.0], [0.0]])).unwrap()[0], 3.0);
        let betas = BetaStack::new(array![[[2.0], [2.0]], [[4.0], [4.0]]], "x").unwrap();
        assert_eq!(cv_bma(&betas, &pp_of(array![[0.5], [0.5]])).unwrap()[0], 3.0);
        // β̂ = [[1, 3], [2, 6]] (models × sessions)
        let betas = BetaStack::new(array![[[1.0], [3.0]], [[2.0], [6.0]]], "x").unwrap();
        let cv = cv_bma(&betas, &pp_of(array![[0.75], [0.25]])).unwrap();
        assert!((cv[0] - 2.5).abs() < 1e-15);
        let per = vec![pp_of(array![[0.73], [0.27]]), pp_of(array![[0.73], [0.27]])];
        let oos = oos_bma(&betas, &per).unwrap();
        // ½[(0.73·1 + 0.27·2) + (0.73·3 + 0.27·6)]
        assert!((oos[0] - 2.54).abs() < 1e-12);
    }

    #[test]
    fn axis_mismatch() {
        let betas = BetaStack::new(Array3::<f64>::zeros((2, 2, 3)), "x").unwrap();
        assert!(cv_bma(&betas, &pp_of(Array2::zeros((2, 2)))).is_err());
        assert!(oos_bma(&betas, &[pp_of(Array2::zeros((2, 3)))]).is_err());
    }
}
