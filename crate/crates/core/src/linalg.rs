//! Minimal dense linear algebra for the low-dimensional (2x2 .. 4x4)
//! covariance computations: symmetric storage, Cholesky factorization
//! and inversion through it. Cholesky doubles as the positive
//! definiteness test.

use alloc::vec::Vec;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: alloc::vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix rows must be square");
            for (c, v) in row.iter().enumerate() {
                m.set(r, c, *v);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.get(k, k)).collect()
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        let mut out = Matrix::zeros(self.n);
        for r in 0..self.n {
            for c in 0..self.n {
                out.set(r, c, 0.5 * (self.get(r, c) + self.get(c, r)));
            }
        }
        out
    }

    /// Lower Cholesky factor, or `None` when the matrix is not
    /// (numerically) symmetric positive definite.
    pub fn cholesky(&self) -> Option<Matrix> {
        let n = self.n;
        let mut l = Matrix::zeros(n);
        for r in 0..n {
            for c in 0..=r {
                let mut sum = self.get(r, c);
                for k in 0..c {
                    sum -= l.get(r, k) * l.get(c, k);
                }
                if r == c {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return None;
                    }
                    l.set(r, c, libm::sqrt(sum));
                } else {
                    l.set(r, c, sum / l.get(c, c));
                }
            }
        }
        Some(l)
    }

    /// Inverse of a symmetric positive definite matrix via Cholesky;
    /// `None` when the factorization fails.
    pub fn spd_inverse(&self) -> Option<Matrix> {
        let l = self.cholesky()?;
        let n = self.n;
        let mut inv = Matrix::zeros(n);
        // Solve L Lᵀ x = e_k column by column.
        for k in 0..n {
            let mut y = alloc::vec![0.0; n];
            for r in 0..n {
                let mut sum = if r == k { 1.0 } else { 0.0 };
                for j in 0..r {
                    sum -= l.get(r, j) * y[j];
                }
                y[r] = sum / l.get(r, r);
            }
            let mut x = alloc::vec![0.0; n];
            for r in (0..n).rev() {
                let mut sum = y[r];
                for j in (r + 1)..n {
                    sum -= l.get(j, r) * x[j];
                }
                x[r] = sum / l.get(r, r);
            }
            for r in 0..n {
                inv.set(r, k, x[r]);
            }
        }
        Some(inv.symmetrized())
    }

    /// `vᵀ A v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.n);
        let mut acc = 0.0;
        for r in 0..self.n {
            for c in 0..self.n {
                acc += v[r] * self.get(r, c) * v[c];
            }
        }
        acc
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        for r in 0..self.n {
            for c in 0..r {
                if (self.get(r, c) - self.get(c, r)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}
