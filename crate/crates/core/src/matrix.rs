//! Dense row-major `f64` matrices and the few vector kernels the model needs.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

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

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    op: "from_rows",
                    left: (rows.len(), cols),
                    right: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// A single row vector.
    pub fn row_vector(values: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) -> Result<()> {
        self.check_same(other, "add_scaled")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    fn check_same(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul_tn",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b_row = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, b_row, out.row_mut(i));
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op: "matmul_nt",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                out[(i, j)] = dot(self.row(i), other.row(j));
            }
        }
        Ok(out)
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    libm::sqrt(dot(x, x))
}

/// Row vector times matrix plus bias: `x · w + b`.
pub fn affine(x: &[f64], w: &Matrix, b: &Matrix) -> Vec<f64> {
    debug_assert_eq!(x.len(), w.rows());
    debug_assert_eq!(b.len(), w.cols());
    let mut out = b.as_slice().to_vec();
    for (k, &xk) in x.iter().enumerate() {
        if xk != 0.0 {
            axpy(xk, w.row(k), &mut out);
        }
    }
    out
}

/// Affine map for a sparse input given as `(row index, value)` pairs.
pub fn sparse_affine(x: &[(usize, f64)], w: &Matrix, b: &Matrix) -> Vec<f64> {
    let mut out = b.as_slice().to_vec();
    for &(k, xk) in x {
        axpy(xk, w.row(k), &mut out);
    }
    out
}

/// `w · yᵀ` as a vector, i.e. the gradient flowing back through `x · w`.
pub fn matvec(w: &Matrix, y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.cols(), y.len());
    (0..w.rows()).map(|r| dot(w.row(r), y)).collect()
}

/// `w += xᵀ · y` for row vectors `x`, `y`.
pub fn add_outer(w: &mut Matrix, x: &[f64], y: &[f64]) {
    debug_assert_eq!((w.rows(), w.cols()), (x.len(), y.len()));
    for (k, &xk) in x.iter().enumerate() {
        if xk != 0.0 {
            axpy(xk, y, w.row_mut(k));
        }
    }
}

pub fn add_sparse_outer(w: &mut Matrix, x: &[(usize, f64)], y: &[f64]) {
    for &(k, xk) in x {
        axpy(xk, y, w.row_mut(k));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    fn assert_close_rel(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            let scale = x.abs().max(y.abs()).max(1e-300);
            assert!((x - y).abs() / scale <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = RngStream::new(1);
        let a = random(3, 4, &mut rng);
        assert_eq!(Matrix::identity(3).matmul(&a).unwrap(), a);
    }

    #[test]
    fn hand_product() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[&[1.0], &[1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c, Matrix::from_rows(&[&[3.0], &[7.0]]).unwrap());
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = RngStream::new(2);
        let a = random(5, 4, &mut rng);
        let b = random(4, 3, &mut rng);
        assert_close_rel(&a.matmul(&b).unwrap(), &naive(&a, &b), 1e-12);
    }

    #[test]
    fn transposed_variants() {
        let mut rng = RngStream::new(3);
        let a = random(4, 5, &mut rng);
        let b = random(4, 3, &mut rng);
        let c = random(6, 5, &mut rng);
        assert_close_rel(&a.matmul_tn(&b).unwrap(), &naive(&a.transpose(), &b), 1e-12);
        assert_close_rel(&a.matmul_nt(&c).unwrap(), &naive(&a, &c.transpose()), 1e-12);
    }

    #[test]
    fn mismatch_is_error() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::DimensionMismatch { .. })));
        assert!(a.matmul_tn(&Matrix::zeros(3, 1)).is_err());
        assert!(a.matmul_nt(&Matrix::zeros(1, 2)).is_err());
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn vector_kernels_agree_with_matmul() {
        let mut rng = RngStream::new(4);
        let w = random(4, 3, &mut rng);
        let b = random(1, 3, &mut rng);
        let x = [0.5, 0.0, -1.0, 2.0];
        let dense = affine(&x, &w, &b);
        let sparse = sparse_affine(&[(0, 0.5), (2, -1.0), (3, 2.0)], &w, &b);
        let via_matmul = Matrix::row_vector(x.to_vec()).matmul(&w).unwrap();
        for j in 0..3 {
            assert!((dense[j] - (via_matmul[(0, j)] + b[(0, j)])).abs() < 1e-14);
            assert!((dense[j] - sparse[j]).abs() < 1e-14);
        }
        let y = [1.0, -2.0, 0.5];
        let back = matvec(&w, &y);
        let via = Matrix::row_vector(y.to_vec()).matmul_nt(&w).unwrap();
        for k in 0..4 {
            assert!((back[k] - via[(0, k)]).abs() < 1e-14);
        }
    }
}
