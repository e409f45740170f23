//! Gauss–Legendre rules and Gamma-weighted quadrature on a truncated half line.

use crate::error::{EvidenceError, Result};
use crate::scalar::Scalar;

use super::gamma::log_gamma_unchecked;
use super::incomplete::reg_upper_incomplete_gamma;

/// Points per Gauss–Legendre panel.
pub const PANEL_ORDER: usize = 16;
/// Uniform panel count the adaptive constructions start from.
pub const INITIAL_PANELS: usize = 8;
/// Upper bound on the panel count reached by doubling.
pub const MAX_PANELS: usize = 4096;
/// Geometric refinement levels inside the panel touching the origin.
const GRADING_LEVELS: i32 = 40;

/// A quadrature rule whose weights already carry the Gamma(shape, 1) density,
/// so that `Σ wₖ f(qₖ) ≈ ∫ f(q) Gam(q; shape, 1) dq`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
    lower: T,
    upper: T,
}

impl<T: Scalar> QuadratureRule<T> {
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Half-open integration interval `[lower, upper)` covered by the nodes.
    pub fn domain(&self) -> (T, T) {
        (self.lower, self.upper)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(T) -> T>(&self, mut f: F) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&q, &w)| w * f(q))
            .sum()
    }
}

/// Nodes and weights of the `order`-point Gauss–Legendre rule on [−1, 1],
/// nodes in increasing order.
pub fn gauss_legendre<T: Scalar>(order: usize) -> (Vec<T>, Vec<T>) {
    assert!(order >= 1, "Gauss-Legendre order must be positive");
    let n = order;
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let one = T::one();
    let nt = T::from_usize_lossy(n);
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let k = T::from_usize_lossy(i) + T::lit(0.75);
        let mut x = (T::PI() * k / (nt + T::half())).cos();
        let mut dp = one;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= T::epsilon() * T::lit(4.0) {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = T::two() / ((one - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }
    (nodes, weights)
}

fn legendre_with_derivative<T: Scalar>(n: usize, x: T) -> (T, T) {
    let one = T::one();
    let mut p0 = one;
    let mut p1 = x;
    for k in 2..=n {
        let kt = T::from_usize_lossy(k);
        let p2 = ((T::two() * kt - one) * x * p1 - (kt - one) * p0) / kt;
        p0 = p1;
        p1 = p2;
    }
    let nt = T::from_usize_lossy(n);
    let d = nt * (x * p1 - p0) / (x * x - one);
    (p1, d)
}

/// Point `Q` where the upper tail of Gamma(shape, 1) equals `tail`.
pub fn gamma_upper_quantile<T: Scalar>(shape: T, tail: T) -> Result<T> {
    if !shape.is_finite() || shape <= T::zero() {
        return Err(EvidenceError::domain(format!("Gamma shape must be positive, got {shape}")));
    }
    if !(tail > T::zero() && tail < T::one()) {
        return Err(EvidenceError::domain(format!("tail probability must lie in (0, 1), got {tail}")));
    }
    let mut lo = T::zero();
    let mut hi = shape.max(T::one());
    while reg_upper_incomplete_gamma(shape, hi)? > tail {
        lo = hi;
        hi *= T::two();
        if !hi.is_finite() {
            return Err(EvidenceError::Numerical("Gamma quantile bracket overflowed".into()));
        }
    }
    for _ in 0..400 {
        let mid = T::half() * (lo + hi);
        if reg_upper_incomplete_gamma(shape, mid)? > tail {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::lit(4.0) * T::epsilon() * hi {
            break;
        }
    }
    Ok(hi)
}

fn check_rule_args<T: Scalar>(shape: T, rel_tail: T) -> Result<()> {
    if !shape.is_finite() || shape <= T::zero() {
        return Err(EvidenceError::domain(format!("Gamma shape must be positive, got {shape}")));
    }
    if !(rel_tail > T::zero() && rel_tail < T::lit(1e-6)) {
        return Err(EvidenceError::domain(format!(
            "relative tail must lie in (0, 1e-6), got {rel_tail}"
        )));
    }
    Ok(())
}

/// Gamma-weighted rule on `[0, Q]` with `Q` the `1 − rel_tail` quantile of
/// Gamma(shape, 1), using `panels` uniform Gauss–Legendre panels.
///
/// For `shape < 1` the rule is built in the variable `s = q^shape`, which
/// removes the integrable density singularity at the origin. The panel
/// touching the origin is additionally split geometrically so that
/// algebraic behaviour of the integrand at zero is resolved.
pub fn gamma_quadrature_with_panels<T: Scalar>(
    shape: T,
    rel_tail: T,
    panels: usize,
) -> Result<QuadratureRule<T>> {
    check_rule_args(shape, rel_tail)?;
    if panels == 0 {
        return Err(EvidenceError::domain("panel count must be positive"));
    }
    let upper = gamma_upper_quantile(shape, rel_tail)?;
    let substituted = shape < T::one();
    let exponent = if substituted { shape.recip() } else { T::one() };
    let s_upper = if substituted { upper.powf(shape) } else { upper };
    let width = s_upper / T::from_usize_lossy(panels);

    // The graded sub-panels stop before q = s^exponent underflows.
    let s_floor = (T::min_positive_value() * T::lit(1e4)).powf(exponent.recip());
    let mut breaks = Vec::with_capacity(GRADING_LEVELS as usize + panels + 1);
    let mut level_start = width;
    let mut graded = Vec::new();
    for _ in 0..GRADING_LEVELS {
        let next = level_start * T::half();
        if next < s_floor {
            break;
        }
        graded.push(next);
        level_start = next;
    }
    breaks.extend(graded.into_iter().rev());
    for i in 1..=panels {
        breaks.push(if i == panels { s_upper } else { width * T::from_usize_lossy(i) });
    }

    let (gl_nodes, gl_weights) = gauss_legendre::<T>(PANEL_ORDER);
    let log_norm = if substituted {
        log_gamma_unchecked(shape + T::one())
    } else {
        log_gamma_unchecked(shape)
    };
    let mut nodes = Vec::with_capacity(breaks.len() * PANEL_ORDER);
    let mut weights = Vec::with_capacity(breaks.len() * PANEL_ORDER);
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = T::half() * (b - a);
        let mid = T::half() * (b + a);
        for (&t, &w) in gl_nodes.iter().zip(&gl_weights) {
            let s = mid + half * t;
            let (q, log_density) = if substituted {
                let q = s.powf(exponent);
                (q, -q - log_norm)
            } else {
                (s, (shape - T::one()) * s.ln() - s - log_norm)
            };
            let weight = w * half * log_density.exp();
            if weight > T::zero() && q > T::zero() {
                nodes.push(q);
                weights.push(weight);
            }
        }
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        lower: T::zero(),
        upper,
    })
}

/// [`gamma_quadrature_with_panels`] with the panel count doubled until the
/// rule's total mass stabilises.
pub fn gamma_quadrature<T: Scalar>(shape: T, rel_tail: T) -> Result<QuadratureRule<T>> {
    check_rule_args(shape, rel_tail)?;
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
    let mut panels = INITIAL_PANELS;
    let mut rule = gamma_quadrature_with_panels(shape, rel_tail, panels)?;
    let mut mass = rule.integrate(|_| T::one());
    while panels < MAX_PANELS {
        panels *= 2;
        let finer = gamma_quadrature_with_panels(shape, rel_tail, panels)?;
        let finer_mass = finer.integrate(|_| T::one());
        let settled = (finer_mass - mass).abs() < tol;
        rule = finer;
        mass = finer_mass;
        if settled {
            return Ok(rule);
        }
    }
    Err(EvidenceError::Numerical(format!(
        "Gamma quadrature for shape {shape} did not settle within {MAX_PANELS} panels"
    )))
}
