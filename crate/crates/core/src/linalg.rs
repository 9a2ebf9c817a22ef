//! Small dense linear algebra on row-major `f64` storage.
//!
//! Everything here is sized for desk-scale problems: normal matrices of
//! dimension `n + 1` and GP covariance matrices of a few hundred rows.

use std::ops::{Index, IndexMut};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)].abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A pivot that failed during Cholesky factorization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PivotFailure {
    pub index: usize,
    pub pivot: f64,
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factorizes a symmetric matrix, reading only its lower triangle.
    ///
    /// A pivot `<= min_pivot` fails the factorization; the failure reports the
    /// smallest pivot seen so far.
    pub fn factor(a: &Matrix, min_pivot: f64) -> Result<Self, PivotFailure> {
        assert_eq!(a.rows, a.cols, "cholesky of non-square matrix");
        let n = a.rows;
        let mut l = Matrix::zeros(n, n);
        let mut smallest = PivotFailure {
            index: 0,
            pivot: f64::INFINITY,
        };
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d < smallest.pivot || d.is_nan() {
                smallest = PivotFailure { index: j, pivot: d };
            }
            if !(d > min_pivot) {
                return Err(smallest);
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut z = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s = dot(&row[..i], &z[..i]);
            z[i] = (z[i] - s) / row[i];
        }
        z
    }

    /// Solves `Lᵀ x = z`.
    pub fn solve_upper(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(z.len(), n);
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }
}

/// Estimates the largest eigenvalue of a symmetric positive semidefinite
/// matrix by power iteration.
///
/// Stops after `max_iters` or once successive Rayleigh quotients differ by
/// less than `tol` relative.
pub fn power_iteration(a: &Matrix, max_iters: usize, tol: f64) -> f64 {
    let n = a.rows;
    if n == 0 {
        return 0.0;
    }
    // Deterministic start; all-ones avoids orthogonality to the top
    // eigenvector for the nonnegative-ish normal matrices seen here.
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let w = a.mul_vec(&v);
        let norm = norm2(&w);
        if norm == 0.0 {
            return 0.0;
        }
        let next = dot(&v, &w);
        v = w.into_iter().map(|x| x / norm).collect();
        let converged = (next - estimate).abs() <= tol * next.abs();
        estimate = next;
        if converged {
            break;
        }
    }
    // Rayleigh quotient at the final vector.
    dot(&v, &a.mul_vec(&v)).max(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Matrix::from_row_major(3, 3, vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]);
        let chol = Cholesky::factor(&a, 0.0).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = chol.solve(&b);
        let back = a.mul_vec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let a = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        let err = Cholesky::factor(&a, 0.0).unwrap_err();
        assert_eq!(err.index, 1);
        assert!((err.pivot + 3.0).abs() < 1e-12);
    }

    #[test]
    fn log_det_of_diagonal() {
        let a = Matrix::from_row_major(2, 2, vec![2.0, 0.0, 0.0, 8.0]);
        let chol = Cholesky::factor(&a, 0.0).unwrap();
        assert!((chol.log_det() - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        let a = Matrix::from_row_major(2, 2, vec![3.0, 1.0, 1.0, 3.0]);
        let top = power_iteration(&a, 50, 1e-12);
        assert!((top - 4.0).abs() < 1e-9);
    }
}
