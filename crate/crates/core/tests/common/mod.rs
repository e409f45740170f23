#![allow(dead_code)]

use evidencer_core::distributions::{gamma_moments, kl_gamma, kl_mvn};
use evidencer_core::glm_ng::{GlmSpec, Precision, VoxelWisePosterior};
use evidencer_core::linalg::Cholesky;
use evidencer_core::special::{gauss_legendre, log_gamma};
use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |(_, j)| if j == 0 { 1.0 } else { normal(rng) })
}

pub fn random_spd(rng: &mut ChaCha8Rng, p: usize, ridge: f64) -> Array2<f64> {
    let a = Array2::from_shape_fn((p, p), |_| normal(rng));
    a.dot(&a.t()) / p as f64 + Array2::<f64>::eye(p) * ridge
}

/// Data generated from a random GLM with diagonal precision.
pub fn random_spec(rng: &mut ChaCha8Rng, n: usize, p: usize, v: usize) -> GlmSpec<f64> {
    let x = random_design(rng, n, p);
    let beta = Array2::from_shape_fn((p, v), |_| normal(rng));
    let noise = Array2::from_shape_fn((n, v), |_| 0.5 + normal(rng));
    let y = x.dot(&beta) + noise;
    let d = Array1::from_shape_fn(n, |_| rng.random_range(0.5..2.0));
    GlmSpec::new(y, x, Precision::Diagonal(d)).unwrap()
}

pub fn random_proper_prior(rng: &mut ChaCha8Rng, p: usize, v: usize) -> VoxelWisePosterior<f64> {
    VoxelWisePosterior {
        mu: Array2::from_shape_fn((p, v), |_| normal(rng)),
        lambda: random_spd(rng, p, 0.2),
        a: rng.random_range(0.5..5.0),
        b: Array1::from_shape_fn(v, |_| rng.random_range(0.5..5.0)),
    }
}

/// Concatenates sessions into one block with block-diagonal precision.
pub fn concat_specs(parts: &[&GlmSpec<f64>]) -> GlmSpec<f64> {
    let ys: Vec<_> = parts.iter().map(|s| s.y().view()).collect();
    let xs: Vec<_> = parts.iter().map(|s| s.x().view()).collect();
    let diag: Vec<f64> = parts
        .iter()
        .flat_map(|s| match s.precision() {
            Precision::Identity => vec![1.0; s.scans()],
            Precision::Diagonal(d) => d.to_vec(),
            Precision::Full(_) => panic!("concat_specs handles diagonal precision only"),
        })
        .collect();
    GlmSpec::new(
        concatenate(Axis(0), &ys).unwrap(),
        concatenate(Axis(0), &xs).unwrap(),
        Precision::Diagonal(Array1::from(diag)),
    )
    .unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

pub fn max_rel_diff(a: &VoxelWisePosterior<f64>, b: &VoxelWisePosterior<f64>) -> f64 {
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(1.0);
    let mut worst = rel(a.a, b.a);
    for (x, y) in a.mu.iter().zip(b.mu.iter()) {
        worst = worst.max(rel(*x, *y));
    }
    for (x, y) in a.lambda.iter().zip(b.lambda.iter()) {
        worst = worst.max(rel(*x, *y));
    }
    for (x, y) in a.b.iter().zip(b.b.iter()) {
        worst = worst.max(rel(*x, *y));
    }
    worst
}

/// One scalar observation block for the p = 1 brute-force oracle.
#[derive(Clone, Debug)]
pub struct ScalarData {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl ScalarData {
    pub fn from_spec(spec: &GlmSpec<f64>, voxel: usize) -> Self {
        assert_eq!(spec.regressors(), 1);
        let w = match spec.precision() {
            Precision::Identity => vec![1.0; spec.scans()],
            Precision::Diagonal(d) => d.to_vec(),
            Precision::Full(_) => panic!("oracle needs diagonal precision"),
        };
        Self {
            y: spec.y().column(voxel).to_vec(),
            x: spec.x().column(0).to_vec(),
            w,
        }
    }

    /// ln N(y; xβ, (τP)⁻¹) written out term by term.
    pub fn log_lik(&self, beta: f64, tau: f64) -> f64 {
        let n = self.y.len() as f64;
        let mut quad = 0.0;
        let mut log_det = 0.0;
        for ((y, x), w) in self.y.iter().zip(&self.x).zip(&self.w) {
            quad += w * (y - x * beta).powi(2);
            log_det += w.ln();
        }
        0.5 * log_det + 0.5 * n * tau.ln() - 0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * tau * quad
    }

    fn sxx(&self) -> f64 {
        self.x.iter().zip(&self.w).map(|(x, w)| w * x * x).sum()
    }

    fn sxy(&self) -> f64 {
        self.x.iter().zip(&self.y).zip(&self.w).map(|((x, y), w)| w * x * y).sum()
    }
}

/// ln N(β; μ, (τλ)⁻¹) + ln Gam(τ; a, b) for scalar β.
pub fn log_ng_prior(beta: f64, tau: f64, mu: f64, lambda: f64, a: f64, b: f64) -> f64 {
    let normal = 0.5 * (tau * lambda).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * tau * lambda * (beta - mu).powi(2);
    let gamma = a * b.ln() - log_gamma(a).unwrap() + (a - 1.0) * tau.ln() - b * tau;
    normal + gamma
}

/// `ln ∫∫ exp(log_f(β, τ)) dβ dτ` by tensor Gauss–Legendre quadrature over
/// (β, ln τ). For every τ the β nodes are centred on the Gaussian whose
/// precision is `tau * beta_precision` and mean `beta_center`. The ln τ
/// window is placed around the mode found by a coarse scan.
pub fn log_integral_2d<F: Fn(f64, f64) -> f64>(log_f: F, beta_center: f64, beta_precision: f64) -> f64 {
    let profile = |u: f64| {
        let tau = u.exp();
        log_f(beta_center, tau) + u - 0.5 * (tau * beta_precision).ln()
    };
    let mode = (-240..=240)
        .map(|i| i as f64 * 0.25)
        .max_by(|a, b| profile(*a).total_cmp(&profile(*b)))
        .unwrap();
    let (gx, gw) = gauss_legendre::<f64>(12);
    let (u_lo, u_hi, u_panels) = (mode - 35.0, mode + 8.0, 300);
    let (b_span, b_panels) = (14.0_f64, 16);
    let mut terms = Vec::with_capacity(u_panels * 12 * b_panels * 12);
    let hu = (u_hi - u_lo) / u_panels as f64;
    for pu in 0..u_panels {
        let u0 = u_lo + pu as f64 * hu;
        for (tu, wu) in gx.iter().zip(&gw) {
            let u = u0 + 0.5 * hu * (tu + 1.0);
            let tau = u.exp();
            let sd = 1.0 / (tau * beta_precision).sqrt();
            let (blo, bhi) = (beta_center - b_span * sd, beta_center + b_span * sd);
            let hb = (bhi - blo) / b_panels as f64;
            for pb in 0..b_panels {
                let b0 = blo + pb as f64 * hb;
                for (tb, wb) in gx.iter().zip(&gw) {
                    let beta = b0 + 0.5 * hb * (tb + 1.0);
                    // dτ = τ du
                    let log_w = (0.5 * hu * wu).ln() + (0.5 * hb * wb).ln() + u;
                    terms.push(log_f(beta, tau) + log_w);
                }
            }
        }
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Brute-force log evidence of scalar data under a proper NG prior.
pub fn brute_force_lme(data: &ScalarData, mu: f64, lambda: f64, a: f64, b: f64) -> f64 {
    let prec = data.sxx() + lambda;
    let center = (data.sxy() + lambda * mu) / prec;
    log_integral_2d(|beta, tau| data.log_lik(beta, tau) + log_ng_prior(beta, tau, mu, lambda, a, b), center, prec)
}

/// Brute-force out-of-sample log evidence: the test data integrated against
/// the training posterior under the non-informative prior, whose kernel is
/// `τ^{p/2 − 1}` with p = 1.
pub fn brute_force_oos_lme(train: &[ScalarData], test: &ScalarData) -> f64 {
    let log_kernel = |beta: f64, tau: f64| -> f64 {
        train.iter().map(|d| d.log_lik(beta, tau)).sum::<f64>() + (0.5 - 1.0) * tau.ln()
    };
    let (sxx_tr, sxy_tr): (f64, f64) = train.iter().fold((0.0, 0.0), |(a, b), d| (a + d.sxx(), b + d.sxy()));
    let num = log_integral_2d(
        |beta, tau| log_kernel(beta, tau) + test.log_lik(beta, tau),
        (sxy_tr + test.sxy()) / (sxx_tr + test.sxx()),
        sxx_tr + test.sxx(),
    );
    let den = log_integral_2d(log_kernel, sxy_tr / sxx_tr, sxx_tr);
    num - den
}

/// Complexity assembled from the KL routines: the normal KL is affine in τ,
/// so its posterior expectation is its value at ⟨τ⟩.
pub fn complexity_from_kls(prior: &VoxelWisePosterior<f64>, post: &VoxelWisePosterior<f64>, voxel: usize) -> f64 {
    let (mean_tau, _) = gamma_moments(post.a, post.b[voxel]).unwrap();
    let cov_post = Cholesky::new((&post.lambda * mean_tau).view(), "post").unwrap().inverse();
    let cov_prior = Cholesky::new((&prior.lambda * mean_tau).view(), "prior").unwrap().inverse();
    let kl_beta = kl_mvn(
        post.mu.column(voxel),
        cov_post.view(),
        prior.mu.column(voxel),
        cov_prior.view(),
    )
    .unwrap();
    let kl_tau = kl_gamma(post.a, post.b[voxel], prior.a, prior.b[voxel]).unwrap();
    kl_beta + kl_tau
}
