//! Small dense-linear-algebra kernels used across the crate: real LU with
//! partial pivoting, complex Cholesky for Hermitian positive definite
//! matrices, and a power iteration for nonnegative matrices.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// LU factorization with partial pivoting, stored in place.
pub struct Lu {
    lu: Array2<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn factor(a: &Array2<f64>) -> Result<Lu> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Dimension(format!(
                "LU needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let mut lu = a.clone();
        let mut perm = (0..n).collect::<Vec<_>>();
        let mut sign = 1.0;
        for k in 0..n {
            let mut p = k;
            let mut max = lu[[k, k]].abs();
            for i in k + 1..n {
                let v = lu[[i, k]].abs();
                if v > max {
                    max = v;
                    p = i;
                }
            }
            if max == 0.0 || !max.is_finite() {
                return Err(Error::Singular(format!("zero pivot at column {k}")));
            }
            if p != k {
                for j in 0..n {
                    lu.swap([k, j], [p, j]);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[[k, k]];
            for i in k + 1..n {
                let factor = lu[[i, k]] / pivot;
                lu[[i, k]] = factor;
                for j in k + 1..n {
                    lu[[i, j]] -= factor * lu[[k, j]];
                }
            }
        }
        Ok(Lu { lu, perm, sign })
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.lu.nrows();
        let mut x = Array1::zeros(n);
        for i in 0..n {
            x[i] = b[self.perm[i]];
        }
        // forward: L y = P b
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s;
        }
        // backward: U x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s / self.lu[[i, i]];
        }
        x
    }

    /// Signed determinant.
    pub fn det(&self) -> f64 {
        let mut d = self.sign;
        for k in 0..self.lu.nrows() {
            d *= self.lu[[k, k]];
        }
        d
    }

    /// log|det| together with the sign of the determinant.
    pub fn log_abs_det(&self) -> (f64, f64) {
        let mut log = 0.0;
        let mut sign = self.sign;
        for k in 0..self.lu.nrows() {
            let p = self.lu[[k, k]];
            log += p.abs().ln();
            if p < 0.0 {
                sign = -sign;
            }
        }
        (log, sign)
    }
}

/// Cholesky factor L (lower triangular) of a Hermitian positive definite
/// matrix; the input is consumed and only the lower triangle is read.
pub struct Cholesky {
    l: Array2<Complex64>,
}

impl Cholesky {
    pub fn factor(mut a: Array2<Complex64>) -> Result<Cholesky> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Dimension("Cholesky needs a square matrix".into()));
        }
        for k in 0..n {
            let mut d = a[[k, k]].re;
            for j in 0..k {
                d -= a[[k, j]].norm_sqr();
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Singular(format!(
                    "matrix not positive definite at pivot {k} ({d:.3e})"
                )));
            }
            let lkk = d.sqrt();
            a[[k, k]] = Complex64::new(lkk, 0.0);
            for i in k + 1..n {
                let mut s = a[[i, k]];
                for j in 0..k {
                    s -= a[[i, j]] * a[[k, j]].conj();
                }
                a[[i, k]] = s / lkk;
            }
        }
        Ok(Cholesky { l: a })
    }

    /// log det of the factored matrix: 2 sum log L_kk.
    pub fn log_det(&self) -> f64 {
        let mut s = 0.0;
        for k in 0..self.l.nrows() {
            s += self.l[[k, k]].re.ln();
        }
        2.0 * s
    }

    /// Trace of the inverse of the factored matrix, via ||L^-1||_F^2.
    pub fn trace_inverse(&self) -> f64 {
        let n = self.l.nrows();
        // invert the lower-triangular factor column by column
        let mut inv = Array2::<Complex64>::zeros((n, n));
        for j in 0..n {
            inv[[j, j]] = Complex64::new(1.0 / self.l[[j, j]].re, 0.0);
            for i in j + 1..n {
                let mut s = Complex64::new(0.0, 0.0);
                for k in j..i {
                    s += self.l[[i, k]] * inv[[k, j]];
                }
                inv[[i, j]] = -s / self.l[[i, i]].re;
            }
        }
        let mut tr = 0.0;
        for j in 0..n {
            for i in j..n {
                tr += inv[[i, j]].norm_sqr();
            }
        }
        tr
    }
}

/// Spectral radius of an entrywise-nonnegative matrix by power iteration.
/// Perron-Frobenius guarantees the dominant eigenvalue is real nonnegative,
/// so the iteration converges without deflation.
pub fn spectral_radius_nonnegative(a: &Array2<f64>, tol: f64, max_iter: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut x = Array1::<f64>::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let y = a.dot(&x);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let new_lambda = x.dot(&y);
        x = y / norm;
        if (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(1.0) {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}

/// Determinant of a small dense matrix by Gaussian elimination.
pub fn small_det(a: &mut Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut det = 1.0;
    for k in 0..n {
        let mut p = k;
        let mut max = a[[k, k]].abs();
        for i in k + 1..n {
            if a[[i, k]].abs() > max {
                max = a[[i, k]].abs();
                p = i;
            }
        }
        if max == 0.0 {
            return 0.0;
        }
        if p != k {
            for j in 0..n {
                a.swap([k, j], [p, j]);
            }
            det = -det;
        }
        let pivot = a[[k, k]];
        det *= pivot;
        for i in k + 1..n {
            let f = a[[i, k]] / pivot;
            for j in k + 1..n {
                a[[i, j]] -= f * a[[k, j]];
            }
        }
    }
    det
}
