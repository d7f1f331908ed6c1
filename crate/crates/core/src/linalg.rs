//! Minimal dense linear algebra for the small (d x d) systems the barrier needs.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// `self += scale * u u^T`
    pub fn add_outer(&mut self, u: &[f64], scale: f64) {
        let n = self.n;
        for i in 0..n {
            let si = scale * u[i];
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, uj) in row.iter_mut().zip(u) {
                *r += si * uj;
            }
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| math::dot(&self.data[i * self.n..(i + 1) * self.n], v))
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Lower-triangular factor `L` with `A = L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factors a symmetric matrix. Only the lower triangle of `a` is read.
    ///
    /// A pivot below `1e-12 * trace(a) / n` is reported as [`Error::SingularH`].
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.dim();
        let floor = 1e-12 * a.trace() / n as f64;
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(Error::SingularH);
        }
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > floor) {
                return Err(Error::SingularH);
            }
            let ljj = math::sqrt(diag);
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.dim()
    }

    /// `log det A`
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim())
            .map(|i| math::ln(self.l[(i, i)]))
            .sum::<f64>()
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward(b);
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// `v^T A^{-1} v`
    pub fn inv_quad(&self, v: &[f64]) -> f64 {
        let mut y = v.to_vec();
        self.forward(&mut y);
        math::dot(&y, &y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_solve_and_logdet() {
        let mut a = Matrix::zeros(3);
        let rows = [[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = rows[i][j];
            }
        }
        let c = Cholesky::factor(&a).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = c.solve(&b);
        let back = a.mul_vec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        // det by cofactor expansion
        let det = 4.0 * (5.0 * 3.0 - 1.0) - 2.0 * (2.0 * 3.0 - 0.4) + 0.4 * (2.0 - 5.0 * 0.4);
        assert!((c.log_det() - math::ln(det)).abs() < 1e-12);
        assert!((c.inv_quad(&b) - math::dot(&b, &x)).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_is_singular() {
        let mut a = Matrix::zeros(2);
        a.add_outer(&[1.0, 1.0], 1.0);
        assert_eq!(Cholesky::factor(&a), Err(Error::SingularH));
    }
}
