//! Normal-gamma hyperparameters, Gamma moments and the KL divergences that
//! make up the complexity penalty.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{EvidenceError, Result};
use crate::linalg::{is_symmetric, trace_of_product, Cholesky};
use crate::scalar::Scalar;
use crate::special::{digamma_unchecked, log_gamma_unchecked};

/// Hyperparameters of N(β; μ, (τΛ)⁻¹) · Gam(τ; a, b).
#[derive(Debug, Clone, PartialEq)]
pub struct NgParams<T> {
    pub mu: Array1<T>,
    pub lambda: Array2<T>,
    pub a: T,
    pub b: T,
}

impl<T: Scalar> NgParams<T> {
    pub fn new(mu: Array1<T>, lambda: Array2<T>, a: T, b: T) -> Result<Self> {
        let p = mu.len();
        if lambda.dim() != (p, p) {
            return Err(EvidenceError::dim(format!(
                "lambda must be {p}x{p}, got {:?}",
                lambda.dim()
            )));
        }
        if !is_symmetric(lambda.view(), T::lit(1e-12)) {
            return Err(EvidenceError::domain("lambda must be symmetric"));
        }
        if !(a >= T::zero() && b >= T::zero()) || !a.is_finite() || !b.is_finite() {
            return Err(EvidenceError::domain(format!(
                "Gamma hyperparameters must be non-negative, got a = {a}, b = {b}"
            )));
        }
        Ok(Self { mu, lambda, a, b })
    }

    /// Flat prior on β and Jeffreys prior on τ: μ₀ = 0, Λ₀ = 0, a₀ = b₀ = 0.
    pub fn non_informative(p: usize) -> Self {
        Self {
            mu: Array1::zeros(p),
            lambda: Array2::zeros((p, p)),
            a: T::zero(),
            b: T::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn is_non_informative(&self) -> bool {
        self.a == T::zero()
            && self.b == T::zero()
            && self.mu.iter().all(|v| *v == T::zero())
            && self.lambda.iter().all(|v| *v == T::zero())
    }

    /// Λ positive definite and a, b > 0.
    pub fn is_proper(&self) -> bool {
        self.a > T::zero() && self.b > T::zero() && Cholesky::new(self.lambda.view(), "lambda").is_ok()
    }
}

/// `(⟨x⟩, ⟨ln x⟩)` for x ~ Gam(a, b) with rate `b`.
pub fn gamma_moments<T: Scalar>(a: T, b: T) -> Result<(T, T)> {
    check_positive(&[("a", a), ("b", b)])?;
    Ok((a / b, digamma_unchecked(a) - b.ln()))
}

/// KL[Gam(a₁, b₁) ‖ Gam(a₂, b₂)] for shape/rate parameterisations.
pub fn kl_gamma<T: Scalar>(a1: T, b1: T, a2: T, b2: T) -> Result<T> {
    check_positive(&[("a1", a1), ("b1", b1), ("a2", a2), ("b2", b2)])?;
    Ok(a2 * (b1 / b2).ln() - (log_gamma_unchecked(a1) - log_gamma_unchecked(a2))
        + (a1 - a2) * digamma_unchecked(a1)
        - (b1 - b2) * a1 / b1)
}

/// KL[N(μ₁, Σ₁) ‖ N(μ₂, Σ₂)].
pub fn kl_mvn<T: Scalar>(
    mu1: ArrayView1<'_, T>,
    sigma1: ArrayView2<'_, T>,
    mu2: ArrayView1<'_, T>,
    sigma2: ArrayView2<'_, T>,
) -> Result<T> {
    let k = mu1.len();
    if mu2.len() != k || sigma1.dim() != (k, k) || sigma2.dim() != (k, k) {
        return Err(EvidenceError::dim(format!(
            "kl_mvn arguments disagree: mu1 {k}, mu2 {}, sigma1 {:?}, sigma2 {:?}",
            mu2.len(),
            sigma1.dim(),
            sigma2.dim()
        )));
    }
    let c1 = Cholesky::new(sigma1, "sigma1")?;
    let c2 = Cholesky::new(sigma2, "sigma2")?;
    let diff = &mu2 - &mu1;
    let maha = diff.dot(&c2.solve_vec(diff.view()));
    let trace = trace_of_product(c2.inverse().view(), sigma1);
    Ok(T::half() * (maha + trace - (c1.log_det() - c2.log_det()) - T::from_usize_lossy(k)))
}

pub(crate) fn check_positive<T: Scalar>(args: &[(&str, T)]) -> Result<()> {
    for &(name, v) in args {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(EvidenceError::domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, StandardNormal};

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    fn random_spd(rng: &mut ChaCha8Rng, k: usize) -> Array2<f64> {
        let a = Array2::from_shape_fn((k, k), |_| rng.sample::<f64, _>(StandardNormal));
        a.dot(&a.t()) + Array2::<f64>::eye(k) * 0.5
    }

    /// Draws from N(μ, Σ) through the lower Cholesky factor.
    fn mvn_draw(rng: &mut ChaCha8Rng, mu: &Array1<f64>, l: &Array2<f64>) -> Array1<f64> {
        let z = Array1::from_shape_fn(mu.len(), |_| rng.sample::<f64, _>(StandardNormal));
        mu + &l.dot(&z)
    }

    fn mvn_log_pdf(x: &Array1<f64>, mu: &Array1<f64>, chol: &Cholesky<f64>) -> f64 {
        let d = x - mu;
        let k = x.len() as f64;
        -0.5 * (k * (2.0 * std::f64::consts::PI).ln() + chol.log_det() + d.dot(&chol.solve_vec(d.view())))
    }

    #[test]
    fn gamma_moments_reference() {
        let (m, lm) = gamma_moments(1.0_f64, 1.0).unwrap();
        assert_eq!(m, 1.0);
        assert!((lm + EULER_GAMMA).abs() < 1e-12);
        // ψ(3) = ψ(1) + 1 + 1/2
        let (m, lm) = gamma_moments(3.0_f64, 3.0).unwrap();
        assert_eq!(m, 1.0);
        assert!((lm - (1.5 - EULER_GAMMA - 3.0_f64.ln())).abs() < 1e-12);
        assert!(gamma_moments(0.0_f64, 1.0).is_err());
        assert!(gamma_moments(1.0_f64, -2.0).is_err());
    }

    #[test]
    fn gamma_moments_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (a, b) = (2.7_f64, 1.9_f64);
        let dist = Gamma::new(a, 1.0 / b).unwrap();
        let draws: Vec<f64> = (0..1_000_000).map(|_| dist.sample(&mut rng)).collect();
        let logs: Vec<f64> = draws.iter().map(|x| x.ln()).collect();
        let (m, se) = mean_and_se(&draws);
        let (lm, lse) = mean_and_se(&logs);
        let (em, elm) = gamma_moments(a, b).unwrap();
        assert!((m - em).abs() < 3.0 * se, "{m} vs {em}");
        assert!((lm - elm).abs() < 3.0 * lse, "{lm} vs {elm}");
    }

    #[test]
    fn kl_gamma_reference() {
        assert_eq!(kl_gamma(1.0_f64, 1.0, 1.0, 1.0).unwrap(), 0.0);
        let v = kl_gamma(2.0_f64, 1.0, 1.0, 1.0).unwrap();
        assert!((v - (1.0 - EULER_GAMMA)).abs() < 1e-12);
        assert!((v - 0.422_784_3).abs() < 1e-7);
        assert!(kl_gamma(1.0_f64, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn kl_gamma_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a1, b1, a2, b2) = (3.2_f64, 2.1, 1.7, 0.8);
        let d1 = Gamma::new(a1, 1.0 / b1).unwrap();
        let log_pdf = |x: f64, a: f64, b: f64| {
            a * b.ln() + (a - 1.0) * x.ln() - b * x - crate::special::log_gamma(a).unwrap()
        };
        let ratios: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let x = d1.sample(&mut rng);
                log_pdf(x, a1, b1) - log_pdf(x, a2, b2)
            })
            .collect();
        let (m, se) = mean_and_se(&ratios);
        let kl = kl_gamma(a1, b1, a2, b2).unwrap();
        assert!((m - kl).abs() < 3.0 * se, "{m} vs {kl} (se {se})");
    }

    #[test]
    fn kl_mvn_reference() {
        let i1 = array![[1.0_f64]];
        let v = kl_mvn(array![1.0].view(), i1.view(), array![0.0].view(), i1.view()).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let s = array![[2.0_f64, 0.3], [0.3, 1.0]];
        let mu = array![0.2_f64, -1.0];
        assert!(kl_mvn(mu.view(), s.view(), mu.view(), s.view()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn kl_mvn_names_bad_covariance() {
        let good = Array2::<f64>::eye(2);
        let bad = array![[1.0_f64, 3.0], [3.0, 1.0]];
        let mu = Array1::<f64>::zeros(2);
        match kl_mvn(mu.view(), good.view(), mu.view(), bad.view()) {
            Err(EvidenceError::Decomposition { what, .. }) => assert_eq!(what, "sigma2"),
            other => panic!("unexpected {other:?}"),
        }
        match kl_mvn(mu.view(), bad.view(), mu.view(), good.view()) {
            Err(EvidenceError::Decomposition { what, .. }) => assert_eq!(what, "sigma1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kl_mvn_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s1 = random_spd(&mut rng, 3);
        let s2 = random_spd(&mut rng, 3);
        let mu1 = array![0.3_f64, -0.2, 1.0];
        let mu2 = array![-0.5_f64, 0.4, 0.8];
        let c1 = Cholesky::new(s1.view(), "s1").unwrap();
        let c2 = Cholesky::new(s2.view(), "s2").unwrap();
        let ratios: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let x = mvn_draw(&mut rng, &mu1, c1.lower());
                mvn_log_pdf(&x, &mu1, &c1) - mvn_log_pdf(&x, &mu2, &c2)
            })
            .collect();
        let (m, se) = mean_and_se(&ratios);
        let kl = kl_mvn(mu1.view(), s1.view(), mu2.view(), s2.view()).unwrap();
        assert!((m - kl).abs() < 3.0 * se, "{m} vs {kl} (se {se})");
    }

    #[test]
    fn kls_vanish_only_at_coincidence() {
        let s = array![[1.5_f64, 0.2], [0.2, 0.7]];
        let mu = array![0.1_f64, 0.2];
        let eps = 1e-3;
        let mu_p = array![0.1 + eps, 0.2];
        let s_p = array![[1.5 + eps, 0.2], [0.2, 0.7]];
        assert!(kl_mvn(mu.view(), s.view(), mu.view(), s.view()).unwrap().abs() < 1e-14);
        assert!(kl_mvn(mu.view(), s.view(), mu_p.view(), s.view()).unwrap() > 0.0);
        assert!(kl_mvn(mu.view(), s.view(), mu.view(), s_p.view()).unwrap() > 0.0);
        assert_eq!(kl_gamma(2.0_f64, 3.0, 2.0, 3.0).unwrap(), 0.0);
        assert!(kl_gamma(2.0_f64, 3.0, 2.0 + eps, 3.0).unwrap() > 0.0);
        assert!(kl_gamma(2.0_f64, 3.0, 2.0, 3.0 + eps).unwrap() > 0.0);
    }

    #[test]
    fn kl_mvn_rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let k = 4;
            let s1 = random_spd(&mut rng, k);
            let s2 = random_spd(&mut rng, k);
            let mu1 = Array1::from_shape_fn(k, |_| rng.sample::<f64, _>(StandardNormal));
            let mu2 = Array1::from_shape_fn(k, |_| rng.sample::<f64, _>(StandardNormal));
            let q = random_rotation(&mut rng, k);
            let base = kl_mvn(mu1.view(), s1.view(), mu2.view(), s2.view()).unwrap();
            let r1 = q.dot(&s1).dot(&q.t());
            let r2 = q.dot(&s2).dot(&q.t());
            let rotated = kl_mvn(q.dot(&mu1).view(), r1.view(), q.dot(&mu2).view(), r2.view()).unwrap();
            assert!((base - rotated).abs() < 1e-9 * base.max(1.0));
        }
    }

    /// Gram–Schmidt on a Gaussian matrix.
    fn random_rotation(rng: &mut ChaCha8Rng, k: usize) -> Array2<f64> {
        let mut q = Array2::from_shape_fn((k, k), |_| rng.sample::<f64, _>(StandardNormal));
        for j in 0..k {
            for i in 0..j {
                let proj = q.column(j).dot(&q.column(i));
                let ci = q.column(i).to_owned();
                q.column_mut(j).scaled_add(-proj, &ci);
            }
            let norm = q.column(j).dot(&q.column(j)).sqrt();
            q.column_mut(j).mapv_inplace(|v| v / norm);
        }
        q
    }

    #[test]
    fn quadratic_form_expectation() {
        // ⟨xᵀAx⟩ = μᵀAμ + tr(AΣ) for x ~ N(μ, Σ)
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = 3;
        let sigma = random_spd(&mut rng, k);
        let a = random_spd(&mut rng, k) - Array2::<f64>::eye(k);
        let mu = array![1.0_f64, -0.5, 0.25];
        let l = Cholesky::new(sigma.view(), "sigma").unwrap().lower().clone();
        let draws: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let x = mvn_draw(&mut rng, &mu, &l);
                x.dot(&a.dot(&x))
            })
            .collect();
        let (m, se) = mean_and_se(&draws);
        let expected = mu.dot(&a.dot(&mu)) + trace_of_product(a.view(), sigma.view());
        assert!((m - expected).abs() < 3.0 * se, "{m} vs {expected}");
    }

    #[test]
    fn ng_params_validation() {
        let ni = NgParams::<f64>::non_informative(3);
        assert!(ni.is_non_informative());
        assert!(!ni.is_proper());
        let p = NgParams::new(array![0.0, 1.0], Array2::eye(2), 1.0, 2.0).unwrap();
        assert!(p.is_proper());
        assert!(NgParams::new(array![0.0, 1.0], array![[1.0, 0.5], [0.0, 1.0]], 1.0, 1.0).is_err());
        assert!(NgParams::new(array![0.0], Array2::eye(2), 1.0, 1.0).is_err());
        assert!(NgParams::new(array![0.0], Array2::eye(1), -1.0, 1.0).is_err());
    }
}
