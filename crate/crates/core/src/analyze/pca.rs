//! Principal components of a row table by power iteration with deflation.
//!
//! For each component the covariance is projected onto the complement of
//! the axes already found, `B = (I − VVᵀ) C (I − VVᵀ)`. Repeated squaring of
//! `B` (renormalized each time) drives it towards the projector onto its top
//! eigenvector; a fixed seeded start vector is pushed through that, then
//! polished by plain power iteration on `B` until the eigen-residual falls
//! below `1e-13 · ‖C‖`. Everything is deterministic for a given input.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{dot, norm2, Matrix};
use crate::rng::{purpose, RngStream};

const MAX_SQUARINGS: usize = 64;
const MAX_POWER_STEPS: usize = 10_000;
const RESIDUAL_TOL: f64 = 1e-13;
/// Variances below this fraction of the total count as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaResult {
    /// `q × d`, one unit axis per row.
    pub components: Matrix,
    /// Sample-covariance eigenvalues, non-increasing.
    pub explained_variance: Vec<f64>,
    pub mean: Vec<f64>,
    /// `n × q` coordinates of the centered rows.
    pub projections: Matrix,
    /// Set when the data had fewer than the requested non-zero variances.
    pub rank_deficient: bool,
}

impl PcaResult {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    /// Projects other rows onto the fitted axes (centering with the fitted
    /// mean).
    pub fn reproject(mut self, data: &Matrix) -> Result<PcaResult> {
        if data.cols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                op: "reproject",
                left: (self.components.rows(), self.mean.len()),
                right: data.shape(),
            });
        }
        self.projections = center(data, &self.mean).matmul_nt(&self.components)?;
        Ok(self)
    }

    /// Discards the first `k` components.
    pub fn drop_leading(&mut self, k: usize) {
        if k == 0 {
            return;
        }
        let k = k.min(self.n_components());
        let (q, d, n) = (self.n_components(), self.mean.len(), self.projections.rows());
        let keep = q - k;
        self.components =
            Matrix::from_vec(keep, d, self.components.as_slice()[k * d..].to_vec()).expect("sizes");
        self.explained_variance.drain(..k);
        let mut p = Matrix::zeros(n, keep);
        for r in 0..n {
            p.row_mut(r).copy_from_slice(&self.projections.row(r)[k..]);
        }
        self.projections = p;
    }
}

fn center(data: &Matrix, mean: &[f64]) -> Matrix {
    let mut out = data.clone();
    for r in 0..out.rows() {
        for (v, m) in out.row_mut(r).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    out
}

fn frobenius(m: &Matrix) -> f64 {
    norm2(m.as_slice())
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|r| dot(m.row(r), v)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm2(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Flips `v` so its largest-magnitude entry (first one on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// `(I − VVᵀ) C (I − VVᵀ)` for the orthonormal rows in `axes`.
fn deflate(cov: &Matrix, axes: &[Vec<f64>]) -> Result<Matrix> {
    let d = cov.rows();
    let mut q = Matrix::identity(d);
    for a in axes {
        for i in 0..d {
            for j in 0..d {
                q[(i, j)] -= a[i] * a[j];
            }
        }
    }
    q.matmul(cov)?.matmul(&q)
}

fn top_eigenvector(b: &Matrix, cov_norm: f64, start: Vec<f64>) -> Vec<f64> {
    let scale = frobenius(b);
    let mut m = b.clone();
    m.scale(1.0 / scale);
    for _ in 0..MAX_SQUARINGS {
        let mut next = m.matmul(&m).expect("square");
        let n = frobenius(&next);
        if n == 0.0 {
            break;
        }
        next.scale(1.0 / n);
        let mut diff = next.clone();
        diff.add_scaled(&m, -1.0).expect("same shape");
        m = next;
        if frobenius(&diff) < 1e-15 {
            break;
        }
    }
    let mut v = mat_vec(&m, &start);
    if normalize(&mut v) < 1e-8 {
        // start happened to be (nearly) orthogonal to the top eigenspace
        let col = (0..m.rows())
            .max_by(|&a, &b| m[(a, a)].total_cmp(&m[(b, b)]))
            .unwrap_or(0);
        v = (0..m.rows()).map(|r| m[(r, col)]).collect();
        normalize(&mut v);
    }
    for _ in 0..MAX_POWER_STEPS {
        let mut bv = mat_vec(b, &v);
        let lambda = dot(&v, &bv);
        let residual = norm2(&bv.iter().zip(&v).map(|(x, y)| x - lambda * y).collect::<Vec<_>>());
        if normalize(&mut bv) == 0.0 {
            break;
        }
        v = bv;
        if residual <= RESIDUAL_TOL * cov_norm {
            break;
        }
    }
    v
}

/// Top-`q` principal components of the rows of `data`.
pub fn pca(data: &Matrix, q: usize) -> Result<PcaResult> {
    let (n, d) = data.shape();
    if q == 0 || q > d {
        return Err(Error::InvalidConfig(alloc::format!("cannot extract {q} components from {d} columns")));
    }
    if n < q.max(2) {
        return Err(Error::TooFewRows {
            needed: q.max(2),
            got: n,
        });
    }
    if !data.is_finite() {
        return Err(Error::NonFinite("pca input"));
    }
    let mut mean = alloc::vec![0.0; d];
    for r in 0..n {
        crate::matrix::axpy(1.0 / n as f64, data.row(r), &mut mean);
    }
    let centered = center(data, &mean);
    let mut cov = centered.matmul_tn(&centered)?;
    cov.scale(1.0 / (n - 1) as f64);
    let total: f64 = (0..d).map(|i| cov[(i, i)]).sum();
    let cov_norm = frobenius(&cov);

    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(q);
    let mut variances = Vec::with_capacity(q);
    let mut rank_deficient = false;
    for k in 0..q {
        let b = deflate(&cov, &axes)?;
        let remaining: f64 = (0..d).map(|i| b[(i, i)]).sum();
        if total <= 0.0 || remaining <= RANK_TOL * total {
            rank_deficient = true;
            break;
        }
        let mut rng = RngStream::derived(0, &[purpose::PCA, k as u64]);
        let start: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let mut v = top_eigenvector(&b, cov_norm, start);
        // keep the axis exactly orthogonal to the earlier ones
        for a in &axes {
            crate::matrix::axpy(-dot(a, &v), a, &mut v);
        }
        normalize(&mut v);
        fix_sign(&mut v);
        let lambda = dot(&v, &mat_vec(&cov, &v));
        if lambda <= RANK_TOL * total {
            rank_deficient = true;
            break;
        }
        variances.push(lambda);
        axes.push(v);
    }
    let found = axes.len();
    let components = Matrix::from_vec(found, d, axes.concat())?;
    let projections = centered.matmul_nt(&components)?;
    Ok(PcaResult {
        components,
        explained_variance: variances,
        mean,
        projections,
        rank_deficient,
    })
}
