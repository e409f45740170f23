//! Exceedance probabilities of a Dirichlet posterior: the probability that
//! each model's frequency is larger than every other model's.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{EvidenceError, Result};
use crate::scalar::Scalar;
use crate::special::{
    gamma_quadrature_with_panels, reg_incomplete_beta, reg_lower_incomplete_gamma, INITIAL_PANELS, MAX_PANELS,
};

use super::sampler::GammaSampler;

/// Smallest Monte Carlo sample count accepted by [`ep_sampling`].
pub const MIN_SAMPLES: usize = 10_000;
/// Sample count used by SPM-style sampling.
pub const DEFAULT_SAMPLES: usize = 1_000_000;
/// Upper tail of each Gamma density dropped by the integration method.
pub const DEFAULT_REL_TAIL: f64 = 1e-12;
/// Convergence threshold on successive EP estimates under panel doubling.
pub const PANEL_TOLERANCE: f64 = 1e-8;

fn check_alpha<T: Scalar>(alpha: &[T]) -> Result<()> {
    if alpha.len() < 2 {
        return Err(EvidenceError::domain(format!(
            "exceedance probabilities need at least 2 models, got {}",
            alpha.len()
        )));
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > T::zero()) || !a.is_finite()) {
        return Err(EvidenceError::domain(format!(
            "Dirichlet concentrations must be positive, got {a}"
        )));
    }
    Ok(())
}

/// Two-model exceedance probabilities from the Beta marginal:
/// `φ₁ = 1 − I_{1/2}(α₁, α₂)`, `φ₂ = 1 − φ₁`.
pub fn ep_beta_closed_form<T: Scalar>(alpha: &[T]) -> Result<Vec<T>> {
    check_alpha(alpha)?;
    if alpha.len() != 2 {
        return Err(EvidenceError::domain(format!(
            "closed-form exceedance probabilities need exactly 2 models, got {}",
            alpha.len()
        )));
    }
    let first = T::one() - reg_incomplete_beta(T::half(), alpha[0], alpha[1])?;
    Ok(vec![first, T::one() - first])
}

/// Monte Carlo exceedance probabilities from `samples` Dirichlet draws.
pub fn ep_sampling<T: Scalar>(alpha: &[T], samples: usize, seed: u64) -> Result<Vec<T>> {
    ep_sampling_stream(alpha, samples, seed, 0)
}

/// [`ep_sampling`] on an independent random stream; the voxel-wise driver
/// uses the voxel index as the stream so results do not depend on chunking.
///
/// Each draw normalises independent Gamma(αⱼ, 1) variates; normalisation
/// preserves their order, so the winning model is read off the Gamma draws.
/// Exact ties go to the lowest model index.
pub fn ep_sampling_stream<T: Scalar>(alpha: &[T], samples: usize, seed: u64, stream: u64) -> Result<Vec<T>> {
    check_alpha(alpha)?;
    if samples < MIN_SAMPLES {
        return Err(EvidenceError::domain(format!(
            "sampling needs at least {MIN_SAMPLES} samples, got {samples}"
        )));
    }
    let samplers = alpha.iter().map(|&a| GammaSampler::new(a)).collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut wins = vec![0_u64; alpha.len()];
    for _ in 0..samples {
        let mut best = 0;
        let mut best_draw = T::neg_infinity();
        for (j, s) in samplers.iter().enumerate() {
            let q = s.sample(&mut rng);
            if q > best_draw {
                best = j;
                best_draw = q;
            }
        }
        wins[best] += 1;
    }
    let total = T::from_usize_lossy(samples);
    Ok(wins
        .into_iter()
        .map(|w| T::from_u64(w).expect("count representable") / total)
        .collect())
}

/// Exceedance probabilities by one-dimensional integration, with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedEp<T> {
    pub probs: Vec<T>,
    /// `Σφ − 1`; the probabilities are not renormalised.
    pub deviation: T,
    /// Uniform panel count at which successive estimates agreed.
    pub panels: usize,
}

/// Exceedance probabilities as
/// `φⱼ = ∫₀^∞ Πᵢ≠ⱼ P(αᵢ, q) · Gam(q; αⱼ, 1) dq`,
/// integrated on Gamma-weighted Gauss–Legendre rules whose panel count is
/// doubled until successive estimates differ by less than 1e-8.
pub fn ep_integration<T: Scalar>(alpha: &[T], rel_tail: T) -> Result<IntegratedEp<T>> {
    check_alpha(alpha)?;
    let tol = T::lit(PANEL_TOLERANCE).max(T::epsilon() * T::lit(256.0));
    let mut panels = INITIAL_PANELS;
    let mut prev = integrate_at(alpha, rel_tail, panels)?;
    while panels < MAX_PANELS {
        panels *= 2;
        let cur = integrate_at(alpha, rel_tail, panels)?;
        let change = prev
            .iter()
            .zip(&cur)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        if change < tol {
            let deviation = cur.iter().copied().sum::<T>() - T::one();
            return Ok(IntegratedEp {
                probs: cur,
                deviation,
                panels,
            });
        }
        prev = cur;
    }
    Err(EvidenceError::Numerical(format!(
        "exceedance integration did not converge within {MAX_PANELS} panels"
    )))
}

fn integrate_at<T: Scalar>(alpha: &[T], rel_tail: T, panels: usize) -> Result<Vec<T>> {
    // Models with equal concentration share the same integral.
    let mut done: Vec<(T, T)> = Vec::new();
    let mut out = Vec::with_capacity(alpha.len());
    for (j, &aj) in alpha.iter().enumerate() {
        if let Some(&(_, phi)) = done.iter().find(|(a, _)| *a == aj) {
            out.push(phi);
            continue;
        }
        let rule = gamma_quadrature_with_panels(aj, rel_tail, panels)?;
        let mut failure = None;
        let phi = rule.integrate(|q| {
            let mut prod = T::one();
            for (i, &ai) in alpha.iter().enumerate() {
                if i != j {
                    match reg_lower_incomplete_gamma(ai, q) {
                        Ok(p) => prod *= p,
                        Err(e) => failure = Some(e),
                    }
                }
            }
            prod
        });
        if let Some(e) = failure {
            return Err(e);
        }
        done.push((aj, phi));
        out.push(phi);
    }
    Ok(out)
}

/// How exceedance probabilities are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpMethod<T> {
    ClosedForm,
    Sampling { samples: usize, seed: u64 },
    Integration { rel_tail: T },
}

impl<T: Scalar> EpMethod<T> {
    pub fn integration() -> Self {
        EpMethod::Integration {
            rel_tail: T::lit(DEFAULT_REL_TAIL),
        }
    }
}

/// Voxel-wise exceedance probabilities (models × voxels).
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceMap<T> {
    pub ep: Array2<T>,
    /// Per-voxel `Σφ − 1`; zero by construction for the closed form and sampling.
    pub deviation: Array1<T>,
    pub stats: EpStats,
}

/// Bookkeeping of how the voxel-wise EPs were obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpStats {
    pub voxels: usize,
    /// Distinct α columns actually evaluated.
    pub evaluated: usize,
    /// Voxels that went through Monte Carlo sampling.
    pub sampled: usize,
}

/// Exceedance probabilities for every column of `alpha` (models × voxels).
///
/// Identical α columns are evaluated once for the deterministic methods.
/// Sampling uses random stream `stream_offset + v` for voxel `v`.
pub fn exceedance_probabilities<T: Scalar>(
    alpha: ArrayView2<'_, T>,
    method: EpMethod<T>,
    stream_offset: u64,
) -> Result<ExceedanceMap<T>> {
    let (k, voxels) = alpha.dim();
    let columns: Vec<Vec<T>> = alpha.axis_iter(Axis(1)).map(|c| c.to_vec()).collect();
    let mut ep = Array2::zeros((k, voxels));
    let mut deviation = Array1::zeros(voxels);
    let mut stats = EpStats {
        voxels,
        ..EpStats::default()
    };
    match method {
        EpMethod::Sampling { samples, seed } => {
            let results = columns
                .par_iter()
                .enumerate()
                .map(|(v, a)| ep_sampling_stream(a, samples, seed, stream_offset + v as u64))
                .collect::<Result<Vec<_>>>()?;
            for (v, probs) in results.into_iter().enumerate() {
                ep.column_mut(v).assign(&Array1::from(probs));
            }
            stats.evaluated = voxels;
            stats.sampled = voxels;
        }
        EpMethod::ClosedForm | EpMethod::Integration { .. } => {
            let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
            let mut unique: Vec<&Vec<T>> = Vec::new();
            let slot: Vec<usize> = columns
                .iter()
                .map(|c| {
                    let key = c.iter().map(|a| a.to_f64().unwrap_or(f64::NAN).to_bits()).collect();
                    *index.entry(key).or_insert_with(|| {
                        unique.push(c);
                        unique.len() - 1
                    })
                })
                .collect();
            let results = unique
                .par_iter()
                .map(|a| match method {
                    EpMethod::ClosedForm => ep_beta_closed_form(a).map(|p| (p, T::zero())),
                    EpMethod::Integration { rel_tail } => {
                        ep_integration(a, rel_tail).map(|r| (r.probs, r.deviation))
                    }
                    EpMethod::Sampling { .. } => unreachable!(),
                })
                .collect::<Result<Vec<_>>>()?;
            for (v, &u) in slot.iter().enumerate() {
                let (probs, dev) = &results[u];
                ep.column_mut(v).assign(&Array1::from(probs.clone()));
                deviation[v] = *dev;
            }
            stats.evaluated = unique.len();
        }
    }
    Ok(ExceedanceMap { ep, deviation, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let ep = ep_beta_closed_form(&[1.0_f64, 1.0]).unwrap();
        assert!((ep[0] - 0.5).abs() < 1e-14 && (ep[1] - 0.5).abs() < 1e-14);
        let ep = ep_beta_closed_form(&[2.0_f64, 1.0]).unwrap();
        assert!((ep[0] - 0.75).abs() < 1e-15);
        for &a in &[0.3_f64, 4.0, 77.0] {
            let ep = ep_beta_closed_form(&[a, a]).unwrap();
            assert!((ep[0] - 0.5).abs() < 1e-12);
        }
        assert!(ep_beta_closed_form(&[1.0_f64, 1.0, 1.0]).is_err());
        assert!(ep_beta_closed_form(&[1.0_f64, 0.0]).is_err());
    }

    #[test]
    fn sampling_is_seeded_and_sums_to_one() {
        let a = [1.5_f64, 2.0, 0.7];
        let x = ep_sampling(&a, 20_000, 9).unwrap();
        let y = ep_sampling(&a, 20_000, 9).unwrap();
        assert_eq!(x, y);
        assert_ne!(x, ep_sampling(&a, 20_000, 10).unwrap());
        assert_eq!(x.iter().sum::<f64>(), 1.0);
        assert!(ep_sampling(&a, 100, 9).is_err());
    }

    #[test]
    fn integration_matches_closed_form() {
        for &(a, b) in &[(1.0_f64, 1.0), (2.0, 1.0), (0.4, 3.0), (12.0, 15.5), (150.0, 170.0)] {
            let r = ep_integration(&[a, b], DEFAULT_REL_TAIL).unwrap();
            let c = ep_beta_closed_form(&[a, b]).unwrap();
            assert!((r.probs[0] - c[0]).abs() < 1e-6, "{a},{b}: {:?} vs {c:?}", r.probs);
            assert!(r.deviation.abs() < 1e-6);
        }
    }

    #[test]
    fn integration_exchangeable() {
        for k in [3, 5, 12] {
            let r = ep_integration(&vec![2.5_f64; k], DEFAULT_REL_TAIL).unwrap();
            for p in r.probs {
                assert!((p - 1.0 / k as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn map_deduplicates_columns() {
        let alpha = ndarray::array![[1.0_f64, 3.0, 1.0], [2.0, 1.0, 2.0]];
        let m = exceedance_probabilities(alpha.view(), EpMethod::integration(), 0).unwrap();
        assert_eq!(m.stats.evaluated, 2);
        assert_eq!(m.stats.sampled, 0);
        assert_eq!(m.ep.column(0), m.ep.column(2));
        let c = exceedance_probabilities(alpha.view(), EpMethod::ClosedForm, 0).unwrap();
        assert!((&m.ep - &c.ep).iter().all(|d| d.abs() < 1e-6));
    }
}
