//! Small dense Cholesky factorization for Gram matrices.
//!
//! Matrices are row-major `n x n` slices. Only the lower triangle is read.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-6;

/// Lower-triangular factor `L` with `A = L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn empty() -> Self {
        Cholesky { n: 0, l: Vec::new() }
    }

    /// Plain factorization; `None` if a pivot is not strictly positive.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return None;
                    }
                    l[i * n + i] = libm::sqrt(sum);
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Some(Cholesky { n, l })
    }

    /// Factor `A + jitter I`, starting at [`JITTER_START`] and doubling up to
    /// [`JITTER_MAX`]. Returns the factor and the jitter that worked.
    pub fn factor_jittered(a: &[f64], n: usize) -> Result<(Self, f64)> {
        let mut jitter = JITTER_START;
        let mut work = a.to_vec();
        loop {
            for i in 0..n {
                work[i * n + i] = a[i * n + i] + jitter;
            }
            if let Some(c) = Self::factor(&work, n) {
                if jitter > JITTER_START {
                    log::debug!("cholesky needed jitter {jitter:e}");
                }
                return Ok((c, jitter));
            }
            if jitter >= JITTER_MAX {
                return Err(Error::FactorizationFailed { jitter });
            }
            jitter = (jitter * 2.0).min(JITTER_MAX);
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> &[f64] {
        &self.l
    }

    /// Grow the factor by one row/column. `col` holds `A[n, 0..n]`, `diag` is
    /// `A[n, n]`. Returns `false` (leaving `self` untouched) when the new pivot
    /// is not positive.
    pub fn extend(&mut self, col: &[f64], diag: f64) -> bool {
        let n = self.n;
        debug_assert_eq!(col.len(), n);
        let row = self.solve_lower(col);
        let pivot = diag - row.iter().map(|v| v * v).sum::<f64>();
        if !(pivot > 0.0) || !pivot.is_finite() {
            return false;
        }
        let m = n + 1;
        let mut l = vec![0.0; m * m];
        for i in 0..n {
            l[i * m..i * m + n].copy_from_slice(&self.l[i * n..(i + 1) * n]);
        }
        l[n * m..n * m + n].copy_from_slice(&row);
        l[n * m + n] = libm::sqrt(pivot);
        self.n = m;
        self.l = l;
        true
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            let mut sum = z[i];
            for k in 0..i {
                sum -= self.l[i * n + k] * z[k];
            }
            z[i] = sum / self.l[i * n + i];
        }
        z
    }

    /// Solves `L^T z = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in (0..n).rev() {
            let mut sum = z[i];
            for k in i + 1..n {
                sum -= self.l[k * n + i] * z[k];
            }
            z[i] = sum / self.l[i * n + i];
        }
        z
    }

    /// Solves `A z = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|i| libm::log(self.l[i * self.n + i]))
            .sum::<f64>()
    }

    /// Dense `A^{-1}`, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}
