//! Conjugate inference for the general linear model with normal-gamma priors,
//! vectorised across voxels.
//!
//! Everything here works from [`SufficientStats`]: `XᵀPX`, `XᵀPY`, the
//! per-voxel `yᵀPy`, the scan count and `ln|P|`. The posterior precision and
//! shape only depend on the design, so they are computed once and shared by
//! all voxels; only the posterior means and rates are per voxel.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::distributions::NgParams;
use crate::error::{EvidenceError, Result};
use crate::linalg::{column_quadratic_forms, frobenius_norm, is_symmetric, trace_of_product, Cholesky};
use crate::scalar::Scalar;
use crate::special::{digamma_unchecked, log_gamma_unchecked};

/// Observation precision matrix `P` of one session.
#[derive(Debug, Clone, PartialEq)]
pub enum Precision<T> {
    Identity,
    /// Diagonal of `P`.
    Diagonal(Array1<T>),
    Full(Array2<T>),
}

impl<T: Scalar> Precision<T> {
    fn validate(&self, n: usize) -> Result<T> {
        match self {
            Precision::Identity => Ok(T::zero()),
            Precision::Diagonal(d) => {
                if d.len() != n {
                    return Err(EvidenceError::dim(format!(
                        "diagonal precision has {} entries for {n} scans",
                        d.len()
                    )));
                }
                if d.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
                    return Err(EvidenceError::decomposition(
                        "precision",
                        "diagonal entries must be positive",
                    ));
                }
                Ok(d.iter().map(|v| v.ln()).sum())
            }
            Precision::Full(p) => {
                if p.dim() != (n, n) {
                    return Err(EvidenceError::dim(format!(
                        "precision is {:?} for {n} scans",
                        p.dim()
                    )));
                }
                if !is_symmetric(p.view(), T::lit(1e-12)) {
                    return Err(EvidenceError::decomposition("precision", "matrix is not symmetric"));
                }
                Ok(Cholesky::new(p.view(), "precision")?.log_det())
            }
        }
    }

    /// `P M`.
    fn apply(&self, m: ArrayView2<'_, T>) -> Array2<T> {
        match self {
            Precision::Identity => m.to_owned(),
            Precision::Diagonal(d) => {
                let mut out = m.to_owned();
                for (mut row, &w) in out.axis_iter_mut(Axis(0)).zip(d) {
                    row.mapv_inplace(|v| v * w);
                }
                out
            }
            Precision::Full(p) => p.dot(&m),
        }
    }

    /// Precision of the sub-vector indexed by `rows`: the inverse of the
    /// matching block of `P⁻¹`.
    fn select(&self, rows: &[usize]) -> Result<Self> {
        Ok(match self {
            Precision::Identity => Precision::Identity,
            Precision::Diagonal(d) => Precision::Diagonal(rows.iter().map(|&i| d[i]).collect()),
            Precision::Full(p) => {
                let cov = Cholesky::new(p.view(), "precision")?.inverse();
                let block = Array2::from_shape_fn((rows.len(), rows.len()), |(i, j)| cov[[rows[i], rows[j]]]);
                Precision::Full(Cholesky::new(block.view(), "selected covariance")?.inverse())
            }
        })
    }
}

/// One session of mass-univariate data: `Y` (scans × voxels), design `X`
/// (scans × regressors) and the observation precision `P`.
#[derive(Debug, Clone)]
pub struct GlmSpec<T> {
    y: Array2<T>,
    x: Array2<T>,
    precision: Precision<T>,
    log_det_precision: T,
}

impl<T: Scalar> GlmSpec<T> {
    pub fn new(y: Array2<T>, x: Array2<T>, precision: Precision<T>) -> Result<Self> {
        let (n, p) = x.dim();
        if y.nrows() != n {
            return Err(EvidenceError::dim(format!(
                "data has {} scans but design has {n}",
                y.nrows()
            )));
        }
        if p == 0 {
            return Err(EvidenceError::dim("design matrix has no columns"));
        }
        if n < p + 1 {
            return Err(EvidenceError::Estimation(format!(
                "{n} scans cannot support {p} regressors (need at least {})",
                p + 1
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(EvidenceError::domain("data and design must be finite"));
        }
        let log_det_precision = precision.validate(n)?;
        check_full_rank(x.view())?;
        Ok(Self {
            y,
            x,
            precision,
            log_det_precision,
        })
    }

    pub fn with_identity_precision(y: Array2<T>, x: Array2<T>) -> Result<Self> {
        Self::new(y, x, Precision::Identity)
    }

    pub fn y(&self) -> &Array2<T> {
        &self.y
    }

    pub fn x(&self) -> &Array2<T> {
        &self.x
    }

    pub fn precision(&self) -> &Precision<T> {
        &self.precision
    }

    pub fn scans(&self) -> usize {
        self.x.nrows()
    }

    pub fn regressors(&self) -> usize {
        self.x.ncols()
    }

    pub fn voxels(&self) -> usize {
        self.y.ncols()
    }

    pub fn log_det_precision(&self) -> T {
        self.log_det_precision
    }

    pub fn sufficient_stats(&self) -> SufficientStats<T> {
        let px = self.precision.apply(self.x.view());
        let py = self.precision.apply(self.y.view());
        let xtpx = self.x.t().dot(&px);
        SufficientStats {
            scans: self.scans(),
            xtpx: (&xtpx + &xtpx.t()) * T::half(),
            xtpy: px.t().dot(&self.y),
            ytpy: (&self.y * &py).sum_axis(Axis(0)),
            log_det_precision: self.log_det_precision,
        }
    }

    /// Restricts the session to the given scans (in order).
    pub fn select_scans(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.scans()) {
            return Err(EvidenceError::dim(format!("scan {bad} out of range")));
        }
        let y = self.y.select(Axis(0), rows);
        let x = self.x.select(Axis(0), rows);
        Self::new(y, x, self.precision.select(rows)?)
    }

    /// Restricts the session to a contiguous voxel range; the design is unchanged.
    pub fn select_voxels(&self, range: Range<usize>) -> Self {
        Self {
            y: self.y.slice(s![.., range]).to_owned(),
            x: self.x.clone(),
            precision: self.precision.clone(),
            log_det_precision: self.log_det_precision,
        }
    }
}

fn check_full_rank<T: Scalar>(x: ArrayView2<'_, T>) -> Result<()> {
    let tol = T::lit(1e-10) * frobenius_norm(x);
    let gram = x.t().dot(&x);
    Cholesky::with_pivot_floor(gram.view(), "design", tol * tol).map_err(|_| {
        EvidenceError::Estimation(format!(
            "design matrix does not have full column rank {}",
            x.ncols()
        ))
    })?;
    Ok(())
}

/// Additive data summaries of one or more sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats<T> {
    pub scans: usize,
    pub xtpx: Array2<T>,
    pub xtpy: Array2<T>,
    pub ytpy: Array1<T>,
    pub log_det_precision: T,
}

impl<T: Scalar> SufficientStats<T> {
    /// Statistics of an empty data block.
    pub fn empty(regressors: usize, voxels: usize) -> Self {
        Self {
            scans: 0,
            xtpx: Array2::zeros((regressors, regressors)),
            xtpy: Array2::zeros((regressors, voxels)),
            ytpy: Array1::zeros(voxels),
            log_det_precision: T::zero(),
        }
    }

    pub fn regressors(&self) -> usize {
        self.xtpx.nrows()
    }

    pub fn voxels(&self) -> usize {
        self.ytpy.len()
    }

    /// Statistics of the concatenation of both blocks (block-diagonal `P`).
    pub fn combine(&self, other: &Self) -> Result<Self> {
        if self.xtpy.dim() != other.xtpy.dim() {
            return Err(EvidenceError::dim(format!(
                "cannot combine statistics of shape {:?} and {:?}",
                self.xtpy.dim(),
                other.xtpy.dim()
            )));
        }
        Ok(Self {
            scans: self.scans + other.scans,
            xtpx: &self.xtpx + &other.xtpx,
            xtpy: &self.xtpy + &other.xtpy,
            ytpy: &self.ytpy + &other.ytpy,
            log_det_precision: self.log_det_precision + other.log_det_precision,
        })
    }

    pub fn sum<'a, I>(regressors: usize, voxels: usize, parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Self>,
        T: 'a,
    {
        parts
            .into_iter()
            .try_fold(Self::empty(regressors, voxels), |acc, s| acc.combine(s))
    }
}

/// Normal-gamma hyperparameters for every voxel: posterior of a voxel-wise
/// fit, or the prior handed to the next update.
///
/// Precision and shape are shared across voxels; means and rates are not.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelWisePosterior<T> {
    /// Regressors × voxels.
    pub mu: Array2<T>,
    pub lambda: Array2<T>,
    pub a: T,
    /// One rate per voxel.
    pub b: Array1<T>,
}

impl<T: Scalar> VoxelWisePosterior<T> {
    /// Uses the same hyperparameters for `voxels` voxels.
    pub fn broadcast(params: &NgParams<T>, voxels: usize) -> Self {
        let p = params.dim();
        let mu = params
            .mu
            .broadcast((voxels, p))
            .expect("broadcast of mean")
            .t()
            .to_owned();
        Self {
            mu,
            lambda: params.lambda.clone(),
            a: params.a,
            b: Array1::from_elem(voxels, params.b),
        }
    }

    pub fn non_informative(regressors: usize, voxels: usize) -> Self {
        Self::broadcast(&NgParams::non_informative(regressors), voxels)
    }

    pub fn regressors(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn voxels(&self) -> usize {
        self.b.len()
    }

    pub fn is_non_informative(&self) -> bool {
        self.a == T::zero()
            && self.b.iter().all(|v| *v == T::zero())
            && self.mu.iter().all(|v| *v == T::zero())
            && self.lambda.iter().all(|v| *v == T::zero())
    }

    /// Hyperparameters of a single voxel.
    pub fn voxel(&self, v: usize) -> NgParams<T> {
        NgParams {
            mu: self.mu.column(v).to_owned(),
            lambda: self.lambda.clone(),
            a: self.a,
            b: self.b[v],
        }
    }

    /// Factor of Λ after checking that every voxel's distribution is proper.
    fn proper_factor(&self, what: &str) -> Result<Cholesky<T>> {
        if !(self.a > T::zero()) {
            return Err(EvidenceError::domain(format!(
                "{what} is not proper: shape a = {}",
                self.a
            )));
        }
        if let Some((v, b)) = self.b.iter().enumerate().find(|(_, b)| !(**b > T::zero())) {
            return Err(EvidenceError::domain(format!(
                "{what} is not proper: rate b = {b} at voxel {v}"
            )));
        }
        Cholesky::new(self.lambda.view(), what).map_err(|e| match e {
            EvidenceError::Decomposition { reason, .. } => {
                EvidenceError::domain(format!("{what} is not proper: precision {reason}"))
            }
            other => other,
        })
    }

    fn check_shape(&self, regressors: usize, voxels: usize, what: &str) -> Result<()> {
        if self.mu.dim() != (regressors, voxels)
            || self.lambda.dim() != (regressors, regressors)
            || self.b.len() != voxels
        {
            return Err(EvidenceError::dim(format!(
                "{what} has {} regressors and {} voxels, expected {regressors} and {voxels}",
                self.regressors(),
                self.voxels()
            )));
        }
        Ok(())
    }
}

/// Conjugate update of `prior` with the data in `spec`.
pub fn posterior_update<T: Scalar>(
    spec: &GlmSpec<T>,
    prior: &VoxelWisePosterior<T>,
) -> Result<VoxelWisePosterior<T>> {
    posterior_update_stats(&spec.sufficient_stats(), prior)
}

/// Conjugate update from sufficient statistics:
///
/// ```text
/// Λₙ = XᵀPX + Λ₀
/// μₙ = Λₙ⁻¹ (XᵀPy + Λ₀μ₀)
/// aₙ = a₀ + n/2
/// bₙ = b₀ + ½ (yᵀPy + μ₀ᵀΛ₀μ₀ − μₙᵀΛₙμₙ)
/// ```
pub fn posterior_update_stats<T: Scalar>(
    stats: &SufficientStats<T>,
    prior: &VoxelWisePosterior<T>,
) -> Result<VoxelWisePosterior<T>> {
    prior.check_shape(stats.regressors(), stats.voxels(), "prior")?;
    if prior.a < T::zero() || prior.b.iter().any(|b| *b < T::zero()) {
        return Err(EvidenceError::domain("prior Gamma hyperparameters must be non-negative"));
    }
    if stats.scans == 0 {
        return Ok(prior.clone());
    }
    let lambda_n = &stats.xtpx + &prior.lambda;
    let factor = Cholesky::new(lambda_n.view(), "posterior precision").map_err(|e| {
        if prior.is_non_informative() {
            EvidenceError::Estimation(
                "design is rank deficient and the prior is non-informative".into(),
            )
        } else {
            e
        }
    })?;
    let rhs = &stats.xtpy + &prior.lambda.dot(&prior.mu);
    let mu_n = factor.solve(rhs.view());
    let a_n = prior.a + T::half() * T::from_usize_lossy(stats.scans);
    let prior_quad = column_quadratic_forms(prior.lambda.view(), prior.mu.view());
    let post_quad = (&mu_n * &rhs).sum_axis(Axis(0));
    let b_n = &prior.b + &((&stats.ytpy + &prior_quad - &post_quad) * T::half());
    if let Some((v, b)) = b_n.iter().enumerate().find(|(_, b)| !(**b > T::zero()) || !b.is_finite()) {
        return Err(EvidenceError::Numerical(format!(
            "posterior rate b = {b} at voxel {v}; the design is likely ill-conditioned"
        )));
    }
    Ok(VoxelWisePosterior {
        mu: mu_n,
        lambda: lambda_n,
        a: a_n,
        b: b_n,
    })
}

fn half_log_two_pi<T: Scalar>() -> T {
    T::half() * (T::two() * T::PI()).ln()
}

/// Log model evidence of the data under a proper prior, given the matching
/// posterior. One value per voxel.
pub fn log_model_evidence<T: Scalar>(
    spec: &GlmSpec<T>,
    prior: &VoxelWisePosterior<T>,
    post: &VoxelWisePosterior<T>,
) -> Result<Array1<T>> {
    log_model_evidence_stats(&spec.sufficient_stats(), prior, post)
}

pub fn log_model_evidence_stats<T: Scalar>(
    stats: &SufficientStats<T>,
    prior: &VoxelWisePosterior<T>,
    post: &VoxelWisePosterior<T>,
) -> Result<Array1<T>> {
    let (p, v) = (stats.regressors(), stats.voxels());
    prior.check_shape(p, v, "prior")?;
    post.check_shape(p, v, "posterior")?;
    let prior_factor = prior.proper_factor("prior")?;
    let post_factor = post.proper_factor("posterior")?;
    let n = T::from_usize_lossy(stats.scans);
    let shared = T::half() * stats.log_det_precision - n * half_log_two_pi::<T>()
        + T::half() * prior_factor.log_det()
        - T::half() * post_factor.log_det()
        + log_gamma_unchecked(post.a)
        - log_gamma_unchecked(prior.a);
    Ok(ndarray::Zip::from(&prior.b)
        .and(&post.b)
        .map_collect(|&b0, &bn| shared + prior.a * b0.ln() - post.a * bn.ln()))
}

/// Posterior expected log-likelihood of the data. One value per voxel.
pub fn accuracy<T: Scalar>(spec: &GlmSpec<T>, post: &VoxelWisePosterior<T>) -> Result<Array1<T>> {
    accuracy_stats(&spec.sufficient_stats(), post)
}

pub fn accuracy_stats<T: Scalar>(
    stats: &SufficientStats<T>,
    post: &VoxelWisePosterior<T>,
) -> Result<Array1<T>> {
    post.check_shape(stats.regressors(), stats.voxels(), "posterior")?;
    let factor = post.proper_factor("posterior")?;
    let n = T::from_usize_lossy(stats.scans);
    // (y − Xμ)ᵀP(y − Xμ) expanded through the sufficient statistics
    let cross = (&post.mu * &stats.xtpy).sum_axis(Axis(0));
    let fitted = column_quadratic_forms(stats.xtpx.view(), post.mu.view());
    let residual = &stats.ytpy - &(cross * T::two()) + &fitted;
    let trace = trace_of_product(stats.xtpx.view(), factor.inverse().view());
    let shared = -T::half() * trace + T::half() * stats.log_det_precision - n * half_log_two_pi::<T>();
    let psi = digamma_unchecked(post.a);
    Ok(ndarray::Zip::from(&residual).and(&post.b).map_collect(|&r, &bn| {
        -T::half() * (post.a / bn) * r + shared + T::half() * n * (psi - bn.ln())
    }))
}

/// KL divergence of the posterior from the prior. One value per voxel.
pub fn complexity<T: Scalar>(
    prior: &VoxelWisePosterior<T>,
    post: &VoxelWisePosterior<T>,
) -> Result<Array1<T>> {
    let (p, v) = (post.regressors(), post.voxels());
    prior.check_shape(p, v, "prior")?;
    let prior_factor = prior.proper_factor("prior")?;
    let post_factor = post.proper_factor("posterior")?;
    let diff = &prior.mu - &post.mu;
    let quad = column_quadratic_forms(prior.lambda.view(), diff.view());
    let shared = T::half() * trace_of_product(prior.lambda.view(), post_factor.inverse().view())
        - T::half() * (prior_factor.log_det() - post_factor.log_det())
        - T::half() * T::from_usize_lossy(p)
        - (log_gamma_unchecked(post.a) - log_gamma_unchecked(prior.a))
        + (post.a - prior.a) * digamma_unchecked(post.a);
    let (a0, an) = (prior.a, post.a);
    let mut out = Array1::zeros(v);
    for i in 0..v {
        let (b0, bn) = (prior.b[i], post.b[i]);
        out[i] = T::half() * (an / bn) * (quad[i] - T::two() * (bn - b0)) + shared + a0 * (bn / b0).ln();
    }
    Ok(out)
}

/// Log evidence, accuracy and complexity of one data block.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceParts<T> {
    pub lme: Array1<T>,
    pub acc: Array1<T>,
    pub com: Array1<T>,
}

/// Evaluates all three quantities for data `stats` under `prior`, where
/// `post` is the posterior after updating `prior` with `stats`.
pub fn evidence_parts<T: Scalar>(
    stats: &SufficientStats<T>,
    prior: &VoxelWisePosterior<T>,
    post: &VoxelWisePosterior<T>,
) -> Result<EvidenceParts<T>> {
    Ok(EvidenceParts {
        lme: log_model_evidence_stats(stats, prior, post)?,
        acc: accuracy_stats(stats, post)?,
        com: complexity(prior, post)?,
    })
}
