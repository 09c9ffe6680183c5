//! Small dense linear-algebra helpers shared by the RNN and kernel code.
//!
//! Everything here is row-major and generic over [`Scalar`]. The two
//! eigen-solvers that need a general-purpose decomposition (nonsymmetric
//! spectrum, full symmetric spectrum) go through `nalgebra` in `f64`.

use nalgebra::DMatrix;

use crate::{Error, Result, Scalar};

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

pub fn scale<T: Scalar>(alpha: T, x: &mut [T]) {
    for xi in x.iter_mut() {
        *xi = *xi * alpha;
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `out = self * x`
    pub fn matvec_into(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out = self^T * x`
    pub fn matvec_t(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != T::zero() {
                axpy(xi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a != T::zero() {
                    axpy(a, other.row(k), orow);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn frobenius_norm(&self) -> T {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).as_f64())
    }
}

/// Eigenvalue moduli of a square matrix, sorted descending.
pub fn eigen_moduli<T: Scalar>(m: &DenseMatrix<T>) -> Vec<f64> {
    assert_eq!(m.rows, m.cols, "eigenvalues of a non-square matrix");
    if m.rows == 0 {
        return Vec::new();
    }
    let mut moduli: Vec<f64> = m
        .to_nalgebra()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    moduli
}

/// Full spectrum of a symmetric matrix, sorted descending. Dense reference solver.
pub fn symmetric_eigenvalues<T: Scalar>(m: &DenseMatrix<T>) -> Vec<f64> {
    assert_eq!(m.rows, m.cols);
    let mut ev: Vec<f64> = m.to_nalgebra().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Singular values, sorted descending.
pub fn singular_values<T: Scalar>(m: &DenseMatrix<T>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.to_nalgebra().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Solves `A x = b` for a small square system by Gaussian elimination with
/// partial pivoting. Columns of `rhs` are solved simultaneously.
///
/// Returns `None` when a pivot falls below `rel_tol * max|A|`.
pub fn solve<T: Scalar>(a: &DenseMatrix<T>, rhs: &DenseMatrix<T>, rel_tol: T) -> Option<DenseMatrix<T>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(rhs.rows, n);
    let k = rhs.cols;
    let mut a = a.clone();
    let mut x = rhs.clone();
    let scale = a.max_abs();
    if scale == T::zero() {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a.get(i, col).abs().partial_cmp(&a.get(j, col).abs()).unwrap())
            .unwrap();
        if a.get(pivot, col).abs() <= rel_tol * scale {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.data.swap(pivot * n + j, col * n + j);
            }
            for j in 0..k {
                x.data.swap(pivot * k + j, col * k + j);
            }
        }
        let p = a.get(col, col);
        for i in (col + 1)..n {
            let f = a.get(i, col) / p;
            if f == T::zero() {
                continue;
            }
            for j in col..n {
                let v = a.get(i, j) - f * a.get(col, j);
                a.set(i, j, v);
            }
            for j in 0..k {
                let v = x.get(i, j) - f * x.get(col, j);
                x.set(i, j, v);
            }
        }
    }
    for col in (0..n).rev() {
        let p = a.get(col, col);
        for j in 0..k {
            let mut s = x.get(col, j);
            for i in (col + 1)..n {
                s = s - a.get(col, i) * x.get(i, j);
            }
            x.set(col, j, s / p);
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_small_system() {
        let a = DenseMatrix::<f64>::from_vec(2, 2, vec![2.0, 1.0, 1.0, 3.0]).unwrap();
        let b = DenseMatrix::from_vec(2, 1, vec![3.0, 5.0]).unwrap();
        let x = solve(&a, &b, 1e-14).unwrap();
        assert!((x.data[0] - 0.8).abs() < 1e-14);
        assert!((x.data[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        let b = DenseMatrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        assert!(solve(&a, &b, 1e-12).is_none());
    }

    #[test]
    fn moduli_of_rotation() {
        let r = DenseMatrix::from_vec(2, 2, vec![0.0, 1.0, -1.0, 0.0]).unwrap();
        let m = eigen_moduli(&r);
        assert!((m[0] - 1.0).abs() < 1e-12 && (m[1] - 1.0).abs() < 1e-12);
    }
}
