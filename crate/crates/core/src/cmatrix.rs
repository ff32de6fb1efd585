//! Dense complex linear algebra.
//!
//! Just enough for link-level MIMO work: products, Hermitian transpose,
//! a one-sided Jacobi SVD with a fixed phase convention, and the
//! Moore-Penrose pseudo-inverse. Matrices are small (at most a few dozen
//! rows), so everything is plain row-major `Vec` storage.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Complex = Complex64;

const ZERO: Complex = Complex::new(0.0, 0.0);
const ONE: Complex = Complex::new(1.0, 0.0);

/// Row-major dense complex matrix. All entries are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        if data.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// `rows x cols` matrix with `diag` on the main diagonal.
    pub fn from_real_diag(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = Complex::new(d, 0.0);
        }
        m
    }

    /// Builds a matrix from its columns; all columns must share one length.
    pub fn from_columns(rows: usize, columns: &[Vec<Complex>]) -> Result<Self> {
        let cols = columns.len();
        if let Some(bad) = columns.iter().find(|c| c.len() != rows) {
            return Err(Error::Shape {
                op: "from_columns",
                left: (rows, cols),
                right: (bad.len(), 1),
            });
        }
        Ok(Self::from_fn(rows, cols, |i, j| columns[j][i]))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Copy of columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> CMatrix {
        CMatrix::from_fn(self.rows, end - start, |i, j| self[(i, start + j)])
    }

    /// Copy of rows `start..end`.
    pub fn rows_range(&self, start: usize, end: usize) -> CMatrix {
        CMatrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Horizontal concatenation.
    pub fn hstack(parts: &[&CMatrix]) -> Result<CMatrix> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(Error::Shape {
                op: "hstack",
                left: (rows, 0),
                right: bad.shape(),
            });
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            for i in 0..rows {
                out.row_mut(i)[offset..offset + p.cols].copy_from_slice(p.row(i));
            }
            offset += p.cols;
        }
        Ok(out)
    }

    /// Vertical concatenation.
    pub fn vstack(parts: &[&CMatrix]) -> Result<CMatrix> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if let Some(bad) = parts.iter().find(|p| p.cols != cols) {
            return Err(Error::Shape {
                op: "vstack",
                left: (0, cols),
                right: bad.shape(),
            });
        }
        let mut data = Vec::new();
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(CMatrix {
            rows: data.len() / cols.max(1),
            cols,
            data,
        })
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self^H * other` without materializing the transpose.
    pub fn hermitian_matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.rows != other.rows {
            return Err(Error::Shape {
                op: "hermitian_matmul",
                left: (self.cols, self.rows),
                right: other.shape(),
            });
        }
        let mut out = CMatrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, a) in a_row.iter().enumerate() {
                let a = a.conj();
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn hermitian(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn add(&self, other: &CMatrix) -> Result<CMatrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &CMatrix) -> Result<CMatrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &CMatrix,
        op: &'static str,
        f: impl Fn(Complex, Complex) -> Complex,
    ) -> Result<CMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: Complex) -> CMatrix {
        self.map(|z| z * s)
    }

    pub fn scale_real(&self, s: f64) -> CMatrix {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(Complex) -> Complex) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// Mean of `|a_ij|^2` over all entries; 0 for an empty matrix.
    pub fn mean_power(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.frobenius_norm_sqr() / self.data.len() as f64
        }
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn matmul(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    a.matmul(b)
}

pub fn hermitian(a: &CMatrix) -> CMatrix {
    a.hermitian()
}

/// `H = U diag(sigma) V^H`, singular values descending.
#[derive(Clone, Debug)]
pub struct SvdTriple {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl SvdTriple {
    /// `U diag(sigma) V^H` with the rectangular diagonal sized to the input.
    pub fn reconstruct(&self) -> CMatrix {
        let (m, n) = (self.u.rows(), self.v.rows());
        let us = CMatrix::from_fn(m, n, |i, j| {
            if j < self.sigma.len() {
                self.u[(i, j)] * self.sigma[j]
            } else {
                ZERO
            }
        });
        CMatrix::from_fn(m, n, |i, j| {
            (0..self.sigma.len())
                .map(|k| us[(i, k)] * self.v[(j, k)].conj())
                .sum()
        })
    }

    /// Count of singular values above `sigma_1 * rel_tol`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let top = self.sigma.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return 0;
        }
        self.sigma.iter().filter(|&&s| s > top * rel_tol).count()
    }

    // First component of each V column with modulus above this is made real-positive.
    const PHASE_THRESHOLD: f64 = 1e-10;

    fn fix_phases(&mut self) {
        let q = self.sigma.len();
        for j in 0..self.v.cols() {
            let pivot = (0..self.v.rows())
                .map(|i| self.v[(i, j)])
                .find(|z| z.norm() > Self::PHASE_THRESHOLD);
            let Some(p) = pivot else { continue };
            let rot = (p / p.norm()).conj();
            for i in 0..self.v.rows() {
                self.v[(i, j)] *= rot;
            }
            if j < q {
                for i in 0..self.u.rows() {
                    self.u[(i, j)] *= rot;
                }
            }
        }
    }
}

const MAX_SWEEPS: usize = 100;

/// Column-major working copy for the Jacobi sweeps.
fn to_columns(a: &CMatrix) -> Vec<Vec<Complex>> {
    (0..a.cols()).map(|j| a.column(j)).collect()
}

fn dot_h(x: &[Complex], y: &[Complex]) -> Complex {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn norm_sqr(x: &[Complex]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

fn pair_mut<T>(v: &mut [T], p: usize, q: usize) -> (&mut T, &mut T) {
    debug_assert!(p < q);
    let (lo, hi) = v.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

/// One-sided (Hestenes) Jacobi on the columns of a tall matrix.
///
/// On return the columns of `work` are mutually orthogonal and, when
/// `accum` is given, `A * accum = work` holds with `accum` unitary.
fn jacobi_orthogonalize(
    work: &mut [Vec<Complex>],
    mut accum: Option<&mut [Vec<Complex>]>,
) -> Result<()> {
    let n = work.len();
    let m = work.first().map_or(0, Vec::len);
    let tol = f64::EPSILON * m.max(1) as f64;
    for sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = norm_sqr(&work[p]);
                let beta = norm_sqr(&work[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot_h(&work[p], &work[q]);
                let g = gamma.norm();
                if g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotate column q by conj(phase) so the pair's Gram entry is real.
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let rotate = |cols: &mut [Vec<Complex>]| {
                    let (cp, cq) = pair_mut(cols, p, q);
                    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                        let yh = *y * phase;
                        let xp = *x;
                        *x = xp * c - yh * s;
                        *y = xp * s + yh * c;
                    }
                };
                rotate(work);
                if let Some(v) = accum.as_deref_mut() {
                    rotate(v);
                }
            }
        }
        if !rotated {
            return Ok(());
        }
        if sweep + 1 == MAX_SWEEPS {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_SWEEPS,
    })
}

/// Extends orthonormal columns to a full basis of `C^dim` with canonical vectors.
fn complete_basis(basis: &mut Vec<Vec<Complex>>, dim: usize) {
    let mut e = 0;
    while basis.len() < dim && e < dim {
        let mut r = vec![ZERO; dim];
        r[e] = ONE;
        e += 1;
        for _ in 0..2 {
            for b in basis.iter() {
                let proj = dot_h(b, &r);
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= proj * bi;
                }
            }
        }
        let nr = norm_sqr(&r).sqrt();
        if nr > 1e-3 {
            r.iter_mut().for_each(|z| *z /= nr);
            basis.push(r);
        }
    }
}

fn descending_order(norms: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    order
}

fn svd_tall(a: &CMatrix) -> Result<SvdTriple> {
    let (m, n) = a.shape();
    let mut work = to_columns(a);
    let mut vcols: Vec<Vec<Complex>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { ONE } else { ZERO }).collect())
        .collect();
    jacobi_orthogonalize(&mut work, Some(&mut vcols))?;

    let norms: Vec<f64> = work.iter().map(|c| norm_sqr(c).sqrt()).collect();
    let order = descending_order(&norms);
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let top = sigma.first().copied().unwrap_or(0.0);
    let cutoff = top * m as f64 * f64::EPSILON;

    let mut ucols: Vec<Vec<Complex>> = Vec::with_capacity(m);
    for (&j, &s) in order.iter().zip(&sigma) {
        if s <= cutoff || s == 0.0 {
            break;
        }
        ucols.push(work[j].iter().map(|z| z / s).collect());
    }
    let rank = ucols.len();
    complete_basis(&mut ucols, m);
    debug_assert!(rank <= n);

    let u = CMatrix::from_columns(m, &ucols)?;
    let vsorted: Vec<Vec<Complex>> = order.iter().map(|&j| vcols[j].clone()).collect();
    let v = CMatrix::from_columns(n, &vsorted)?;
    Ok(SvdTriple { u, sigma, v })
}

/// Full SVD: `u` is `rows x rows`, `v` is `cols x cols`,
/// `sigma` has `min(rows, cols)` entries in descending order.
///
/// Phases are fixed so the first non-negligible entry of every V column is
/// real and positive; U columns are rotated to match.
pub fn svd(a: &CMatrix) -> Result<SvdTriple> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut out = if a.rows() >= a.cols() {
        svd_tall(a)?
    } else {
        // A^H = U' S V'^H  =>  A = V' S U'^H
        let t = svd_tall(&a.hermitian())?;
        SvdTriple {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        }
    };
    out.fix_phases();
    Ok(out)
}

/// Singular values only, descending. Skips accumulation of the
/// singular vectors, which makes it several times cheaper than [`svd`].
pub fn singular_values(a: &CMatrix) -> Result<Vec<f64>> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut work = if a.rows() >= a.cols() {
        to_columns(a)
    } else {
        to_columns(&a.hermitian())
    };
    jacobi_orthogonalize(&mut work, None)?;
    let mut s: Vec<f64> = work.iter().map(|c| norm_sqr(c).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Moore-Penrose pseudo-inverse with cutoff `max(rows, cols) * sigma_1 * 1e-12`.
pub fn pinv(a: &CMatrix) -> Result<CMatrix> {
    let (m, n) = a.shape();
    let t = svd(a)?;
    let top = t.sigma.first().copied().unwrap_or(0.0);
    let cutoff = m.max(n) as f64 * top * 1e-12;
    let mut out = CMatrix::zeros(n, m);
    for (k, &s) in t.sigma.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..n {
            let vik = t.v[(i, k)] * inv;
            for j in 0..m {
                out[(i, j)] += vik * t.u[(j, k)].conj();
            }
        }
    }
    Ok(out)
}
