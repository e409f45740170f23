//! Log-gamma and digamma.

use crate::error::{EvidenceError, Result};
use crate::scalar::Scalar;

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural logarithm of the gamma function for positive finite arguments.
pub fn log_gamma<T: Scalar>(x: T) -> Result<T> {
    if !x.is_finite() || x <= T::zero() {
        return Err(EvidenceError::domain(format!(
            "log_gamma requires a positive finite argument, got {x}"
        )));
    }
    Ok(log_gamma_unchecked(x))
}

/// `log_gamma` without the domain check; callers guarantee `x > 0`.
pub(crate) fn log_gamma_unchecked<T: Scalar>(x: T) -> T {
    let one = T::one();
    if x < T::half() {
        // Γ(x) = Γ(x+1)/x keeps the Lanczos sum away from its pole.
        return log_gamma_unchecked(x + one) - x.ln();
    }
    let z = x - one;
    let mut sum = T::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        sum += T::lit(c) / (z + T::from_usize_lossy(i));
    }
    let t = z + T::lit(LANCZOS_G) + T::half();
    let half_ln_two_pi = T::half() * (T::two() * T::PI()).ln();
    half_ln_two_pi + (z + T::half()) * t.ln() - t + sum.ln()
}

/// Digamma function ψ(x) = d/dx ln Γ(x) for positive arguments.
///
/// Upward recurrence to x ≥ 6 followed by the asymptotic expansion.
pub fn digamma<T: Scalar>(x: T) -> Result<T> {
    if !x.is_finite() || x <= T::zero() {
        return Err(EvidenceError::domain(format!(
            "digamma requires a positive finite argument, got {x}"
        )));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked<T: Scalar>(mut x: T) -> T {
    let one = T::one();
    let switchover = T::lit(6.0);
    let mut acc = T::zero();
    while x < switchover {
        acc -= one / x;
        x += one;
    }
    let inv = one / x;
    let inv2 = inv * inv;
    // Bernoulli-number tail: 1/12, 1/120, 1/252, 1/240, 1/132, 691/32760
    let tail = inv2
        * (T::lit(1.0 / 12.0)
            - inv2
                * (T::lit(1.0 / 120.0)
                    - inv2
                        * (T::lit(1.0 / 252.0)
                            - inv2
                                * (T::lit(1.0 / 240.0)
                                    - inv2 * (T::lit(1.0 / 132.0) - inv2 * T::lit(691.0 / 32760.0))))));
    acc + x.ln() - T::half() * inv - tail
}
