//! Small dense linear algebra: Cholesky factorization and SPD solves.
//!
//! Every system solved by the models is symmetric positive definite (ridge
//! normal equations, Gaussian precisions, regularized Laplacians), so a
//! Cholesky factorization is all that is needed.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{BdlError, Result};
use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    lower: Array2<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: ArrayView2<'_, T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(BdlError::dim(format!(
                "cholesky of non-square {}x{} matrix",
                n,
                a.ncols()
            )));
        }
        let mut l = Array2::<T>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(BdlError::Solve(format!(
                    "matrix not positive definite (pivot {} = {})",
                    j, d
                )));
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Cholesky { lower: l })
    }

    pub fn lower(&self) -> &Array2<T> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: ArrayView1<'_, T>) -> Array1<T> {
        let n = self.dim();
        let mut y = Array1::<T>::zeros(n);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.lower[[i, k]] * y[k];
            }
            y[i] = s / self.lower[[i, i]];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn backward(&self, y: ArrayView1<'_, T>) -> Array1<T> {
        let n = self.dim();
        let mut x = Array1::<T>::zeros(n);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.lower[[k, i]] * x[k];
            }
            x[i] = s / self.lower[[i, i]];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: ArrayView1<'_, T>) -> Array1<T> {
        let y = self.forward(b);
        self.backward(y.view())
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: ArrayView2<'_, T>) -> Array2<T> {
        let mut out = Array2::<T>::zeros(b.raw_dim());
        for (c, col) in b.axis_iter(Axis(1)).enumerate() {
            out.column_mut(c).assign(&self.solve(col));
        }
        out
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> T {
        let two = T::of(2.0);
        self.lower.diag().iter().fold(T::zero(), |acc, &d| acc + two * d.ln())
    }
}

/// Solves the SPD system `A x = b`.
pub fn solve_spd<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Result<Array1<T>> {
    Ok(Cholesky::new(a)?.solve(b))
}

/// Solves `(A + jitter·I) X = B`.
pub fn solve_spd_jittered<T: Scalar>(
    a: ArrayView2<'_, T>,
    b: ArrayView2<'_, T>,
    jitter: T,
) -> Result<Array2<T>> {
    let mut a = a.to_owned();
    a.diag_mut().mapv_inplace(|d| d + jitter);
    Ok(Cholesky::new(a.view())?.solve_mat(b))
}

/// `A + s·I` for square `A`.
pub fn add_diag<T: Scalar>(a: &mut Array2<T>, s: T) {
    a.diag_mut().mapv_inplace(|d| d + s);
}

pub fn sq_norm<T: Scalar>(v: ArrayView1<'_, T>) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + x * x)
}

pub fn frob_sq<T: Scalar>(m: ArrayView2<'_, T>) -> T {
    m.iter().fold(T::zero(), |acc, &x| acc + x * x)
}
