//! Dense vector helpers over `f64` slices and a small symmetric matrix type.
//!
//! Vectors are plain `Vec<f64>`; the helpers here are the only arithmetic the
//! solvers need in their inner loops. Matrices are backed by `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{PdxError, Result};

pub fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(PdxError::DimMismatch(format!("{} vs {}", a.len(), b.len())));
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

/// `alpha * a + beta * b`
pub fn lincomb(alpha: f64, a: &[f64], beta: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| alpha * x + beta * y).collect()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Relative distance `‖a − b‖ / max(1, ‖a‖, ‖b‖)`.
pub fn rel_dist(a: &[f64], b: &[f64]) -> f64 {
    let scale = norm(a).max(norm(b)).max(1.0);
    dist_sq(a, b).sqrt() / scale
}

/// A symmetric matrix stored either as its diagonal or densely.
#[derive(Debug, Clone, PartialEq)]
pub enum SymMatrix {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl SymMatrix {
    pub fn zeros(d: usize) -> Self {
        SymMatrix::Diagonal(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        match self {
            SymMatrix::Diagonal(v) => v.len(),
            SymMatrix::Dense(m) => m.nrows(),
        }
    }

    /// `out = self * x`
    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            SymMatrix::Diagonal(d) => {
                for ((o, di), xi) in out.iter_mut().zip(d).zip(x) {
                    *o = di * xi;
                }
            }
            SymMatrix::Dense(m) => dense_mul_into(m, x, out),
        }
    }

    /// `out += self * x`
    pub fn mul_add_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            SymMatrix::Diagonal(d) => {
                for ((o, di), xi) in out.iter_mut().zip(d).zip(x) {
                    *o += di * xi;
                }
            }
            SymMatrix::Dense(m) => {
                let (r, c) = m.shape();
                for j in 0..c {
                    let xj = x[j];
                    if xj == 0.0 {
                        continue;
                    }
                    let col = m.column(j);
                    for i in 0..r {
                        out[i] += col[i] * xj;
                    }
                }
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.mul_into(x, &mut out);
        out
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul(x))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SymMatrix::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            SymMatrix::Dense(m) => m.clone(),
        }
    }

    /// Extreme eigenvalues `(min, max)`, exact for diagonals and computed by a
    /// symmetric eigendecomposition otherwise.
    pub fn eig_range(&self) -> (f64, f64) {
        match self {
            SymMatrix::Diagonal(d) => {
                let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            SymMatrix::Dense(m) => {
                let e = m.clone().symmetric_eigenvalues();
                let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        match self {
            SymMatrix::Diagonal(_) => true,
            SymMatrix::Dense(m) => is_symmetric(m, tol),
        }
    }

    pub fn add_identity(&self, c: f64) -> SymMatrix {
        match self {
            SymMatrix::Diagonal(d) => SymMatrix::Diagonal(d.iter().map(|v| v + c).collect()),
            SymMatrix::Dense(m) => {
                let n = m.nrows();
                SymMatrix::Dense(m + DMatrix::identity(n, n) * c)
            }
        }
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        match self {
            SymMatrix::Diagonal(d) => SymMatrix::Diagonal(d.iter().map(|v| v * c).collect()),
            SymMatrix::Dense(m) => SymMatrix::Dense(m * c),
        }
    }
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// `out = m * x` for a column-major dense matrix.
pub fn dense_mul_into(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let (r, c) = m.shape();
    debug_assert_eq!(x.len(), c);
    debug_assert_eq!(out.len(), r);
    out.iter_mut().for_each(|o| *o = 0.0);
    for j in 0..c {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        let col = m.column(j);
        for i in 0..r {
            out[i] += col[i] * xj;
        }
    }
}

/// `out += mᵀ * y`
pub fn dense_tr_mul_add_into(m: &DMatrix<f64>, y: &[f64], out: &mut [f64]) {
    let (r, c) = m.shape();
    debug_assert_eq!(y.len(), r);
    debug_assert_eq!(out.len(), c);
    for j in 0..c {
        let col = m.column(j);
        let mut acc = 0.0;
        for i in 0..r {
            acc += col[i] * y[i];
        }
        out[j] += acc;
    }
}

/// Largest singular value of a rectangular matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Power iteration estimate of the largest eigenvalue of a symmetric PSD
/// matrix. Stops after `iters` rounds or once successive estimates agree to
/// `tol` relative.
pub fn power_iteration_lmax(m: &DMatrix<f64>, iters: usize, tol: f64) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut est = 0.0;
    for _ in 0..iters {
        dense_mul_into(m, &v, &mut w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = dot(&v, &w);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if (next - est).abs() <= tol * next.abs().max(1e-300) {
            est = next;
            break;
        }
        est = next;
    }
    est
}

/// Solves `m x = b` by LU with partial pivoting.
pub fn solve_dense(m: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let rhs = DVector::from_column_slice(b);
    let lu = m.clone().lu();
    lu.solve(&rhs)
        .map(|v| v.as_slice().to_vec())
        .ok_or_else(|| PdxError::SingularSystem(format!("{}x{} system", m.nrows(), m.ncols())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_products_match_nalgebra() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = [1.0, -1.0, 2.0];
        let mut out = [0.0; 2];
        dense_mul_into(&m, &x, &mut out);
        assert_eq!(out, [5.0, 11.0]);
        let mut t = [0.0; 3];
        dense_tr_mul_add_into(&m, &[1.0, 1.0], &mut t);
        assert_eq!(t, [5.0, 7.0, 9.0]);
    }

    #[test]
    fn power_iteration_close_to_eigen() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 1.0]);
        let exact = SymMatrix::Dense(m.clone()).eig_range().1;
        let est = power_iteration_lmax(&m, 30, 1e-6);
        assert!((est - exact).abs() < 1e-4 * exact);
        assert!(est <= exact + 1e-9);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, -5.0, 0.0]);
        assert!((spectral_norm(&m) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn solve_small_system() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, -2.0]);
        let x = solve_dense(&m, &[1.0, 0.0]).unwrap();
        assert!((x[0] - 0.4).abs() < 1e-14 && (x[1] - 0.2).abs() < 1e-14);
    }
}
