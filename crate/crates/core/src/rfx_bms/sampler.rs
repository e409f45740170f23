//! Gamma(shape, 1) variates by Marsaglia–Tsang rejection, with the
//! `U^{1/shape}` boost for shapes below one.

use rand::Rng;
use rand_distr::{Open01, StandardNormal};

use crate::error::{EvidenceError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct GammaSampler<T> {
    d: T,
    c: T,
    inv_shape: Option<T>,
}

impl<T: Scalar> GammaSampler<T> {
    pub fn new(shape: T) -> Result<Self> {
        if !(shape > T::zero()) || !shape.is_finite() {
            return Err(EvidenceError::domain(format!("Gamma shape must be positive, got {shape}")));
        }
        let (base, inv_shape) = if shape < T::one() {
            (shape + T::one(), Some(shape.recip()))
        } else {
            (shape, None)
        };
        let d = base - T::lit(1.0 / 3.0);
        let c = (T::lit(9.0) * d).sqrt().recip();
        Ok(Self { d, c, inv_shape })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let one = T::one();
        let draw = loop {
            let x = T::lit(rng.sample::<f64, _>(StandardNormal));
            let v = one + self.c * x;
            if v <= T::zero() {
                continue;
            }
            let v = v * v * v;
            let u = T::lit(rng.sample::<f64, _>(Open01));
            let x2 = x * x;
            if u < one - T::lit(0.0331) * x2 * x2 {
                break self.d * v;
            }
            if u.ln() < T::half() * x2 + self.d * (one - v + v.ln()) {
                break self.d * v;
            }
        };
        match self.inv_shape {
            Some(inv) => draw * T::lit(rng.sample::<f64, _>(Open01)).powf(inv),
            None => draw,
        }
    }
}
