use crate::error::{EvidenceError, Result};
use crate::scalar::Scalar;

/// `log Σ exp(vᵢ)` evaluated by shifting with the maximum entry.
///
/// Entries equal to −∞ contribute nothing; if every entry is −∞ the
/// result is −∞.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> Result<T> {
    if values.is_empty() {
        return Err(EvidenceError::domain("log_sum_exp of an empty list"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(EvidenceError::domain("log_sum_exp input contains NaN"));
    }
    Ok(log_sum_exp_iter(values.iter().copied()))
}

/// Iterator form of [`log_sum_exp`] for callers that already validated input.
pub(crate) fn log_sum_exp_iter<T: Scalar, I>(values: I) -> T
where
    I: IntoIterator<Item = T> + Clone,
{
    let max = values
        .clone()
        .into_iter()
        .fold(T::neg_infinity(), |m, v| if v > m { v } else { m });
    if max == T::neg_infinity() || max == T::infinity() {
        return max;
    }
    let sum: T = values.into_iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}
