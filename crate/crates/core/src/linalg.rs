//! Dense Cholesky factorisation and the handful of matrix helpers the
//! conjugate updates need.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{EvidenceError, Result};
use crate::scalar::Scalar;

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    lower: Array2<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factorises a symmetric positive definite matrix. `what` names the
    /// matrix in the error message.
    pub fn new(a: ArrayView2<'_, T>, what: &str) -> Result<Self> {
        Self::with_pivot_floor(a, what, T::zero())
    }

    /// Like [`Cholesky::new`] but treats pivots at or below `floor` as a
    /// rank deficiency.
    pub fn with_pivot_floor(a: ArrayView2<'_, T>, what: &str, floor: T) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(EvidenceError::dim(format!(
                "{what} must be square, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let mut lower = Array2::<T>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= lower[[j, k]] * lower[[j, k]];
            }
            if !(diag > floor) || !diag.is_finite() {
                return Err(EvidenceError::decomposition(
                    what,
                    format!("matrix is not positive definite (pivot {j} = {diag})"),
                ));
            }
            let ljj = diag.sqrt();
            lower[[j, j]] = ljj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= lower[[i, k]] * lower[[j, k]];
                }
                lower[[i, j]] = s / ljj;
            }
        }
        Ok(Self { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Array2<T> {
        &self.lower
    }

    /// `ln |A|`.
    pub fn log_det(&self) -> T {
        T::two() * self.lower.diag().iter().map(|d| d.ln()).sum::<T>()
    }

    /// Solves `A X = B` for every column of `B`.
    pub fn solve(&self, b: ArrayView2<'_, T>) -> Array2<T> {
        let n = self.dim();
        let mut x = b.to_owned();
        for mut col in x.axis_iter_mut(Axis(1)) {
            for i in 0..n {
                let mut s = col[i];
                for k in 0..i {
                    s -= self.lower[[i, k]] * col[k];
                }
                col[i] = s / self.lower[[i, i]];
            }
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in (i + 1)..n {
                    s -= self.lower[[k, i]] * col[k];
                }
                col[i] = s / self.lower[[i, i]];
            }
        }
        x
    }

    pub fn solve_vec(&self, b: ArrayView1<'_, T>) -> Array1<T> {
        let n = b.len();
        self.solve(b.into_shape_with_order((n, 1)).expect("column view"))
            .into_shape_with_order(n)
            .expect("vector reshape")
    }

    pub fn inverse(&self) -> Array2<T> {
        let inv = self.solve(Array2::<T>::eye(self.dim()).view());
        symmetrize(&inv)
    }
}

/// `max |A - Aᵀ| <= rel_tol · max |A|`.
pub fn is_symmetric<T: Scalar>(a: ArrayView2<'_, T>, rel_tol: T) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[[i, j]] - a[[j, i]]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize<T: Scalar>(a: &Array2<T>) -> Array2<T> {
    (a + &a.t()) * T::half()
}

/// Per-column quadratic forms `mᵥᵀ A mᵥ` for the columns of `m`.
pub fn column_quadratic_forms<T: Scalar>(a: ArrayView2<'_, T>, m: ArrayView2<'_, T>) -> Array1<T> {
    let am = a.dot(&m);
    (&am * &m).sum_axis(Axis(0))
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> T {
    (&a * &b.t()).sum()
}

pub fn frobenius_norm<T: Scalar>(a: ArrayView2<'_, T>) -> T {
    a.iter().map(|&v| v * v).sum::<T>().sqrt()
}
