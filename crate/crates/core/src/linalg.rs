//! Cholesky factorization of kernel Gram matrices with escalating diagonal jitter.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// First jitter tried, relative to the kernel variance `h²`.
pub const INITIAL_RELATIVE_JITTER: f64 = 1e-8;
/// Largest jitter tried before giving up.
pub const MAX_RELATIVE_JITTER: f64 = 1e-4;

/// Lower Cholesky factor `L` of `K + jitter · I`, stored row-major.
#[derive(Clone, Debug)]
pub struct JitteredCholesky {
    dim: usize,
    lower: Vec<f64>,
    jitter: f64,
}

impl JitteredCholesky {
    /// Factorize `matrix + j·I`, starting at `j = 1e-8·variance` and growing
    /// tenfold up to `1e-4·variance`.
    pub fn new(matrix: DMatrix<f64>, variance: f64) -> Result<Self> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim {
            return Err(Error::input("Cholesky factorization needs a square matrix"));
        }
        let mut relative = INITIAL_RELATIVE_JITTER;
        loop {
            let jitter = relative * variance;
            let mut shifted = matrix.clone();
            for i in 0..dim {
                shifted[(i, i)] += jitter;
            }
            if let Some(chol) = shifted.cholesky() {
                let l = chol.l();
                let mut lower = vec![0.0; dim * dim];
                for i in 0..dim {
                    for j in 0..=i {
                        lower[i * dim + j] = l[(i, j)];
                    }
                }
                return Ok(JitteredCholesky { dim, lower, jitter });
            }
            relative *= 10.0;
            if relative > MAX_RELATIVE_JITTER * (1.0 + 1e-9) {
                return Err(Error::conditioning(format!(
                    "{dim}x{dim} Gram matrix is not positive definite even with jitter {:.1e}·h²",
                    MAX_RELATIVE_JITTER
                )));
            }
        }
    }

    /// Factor of an empty matrix.
    pub fn empty() -> Self {
        JitteredCholesky {
            dim: 0,
            lower: Vec::new(),
            jitter: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// `b <- L⁻¹ b`.
    #[inline]
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let mut s = b[i];
            for (l, x) in row.iter().zip(&b[..i]) {
                s -= l * x;
            }
            b[i] = s / self.lower[i * n + i];
        }
    }

    /// `b <- L⁻ᵀ b`.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= self.lower[j * n + i] * b[j];
            }
            b[i] = s / self.lower[i * n + i];
        }
    }

    /// `(K + jitter·I)⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|i| {
                self.lower[i * n..i * n + i + 1]
                    .iter()
                    .zip(z)
                    .map(|(l, x)| l * x)
                    .sum()
            })
            .collect()
    }

    /// `log det(K + jitter·I)`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim).map(|i| 2.0 * self.entry(i, i).ln()).sum()
    }
}
