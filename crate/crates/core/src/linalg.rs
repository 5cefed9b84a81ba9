//! Small dense linear algebra: complex matrices, a cyclic Jacobi eigensolver
//! for Hermitian matrices, real symmetric helpers and a column-scaled
//! Householder least-squares solver.
//!
//! Every matrix that appears in a mode problem is at most a few dozen rows,
//! so the routines favour accuracy and determinism over asymptotic speed.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;
use num_traits::Zero;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real(m: &RMatrix) -> Self {
        Self::from_fn(m.rows(), m.cols(), |r, c| C64::new(m[(r, c)], 0.0))
    }

    pub fn diagonal(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &z) in d.iter().enumerate() {
            m[(i, i)] = z;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch in add");
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch in sub");
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: C64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch in axpy");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "shape mismatch in mul");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^H * self`, Hermitian by construction.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = C64::zero();
                for r in 0..self.rows {
                    acc += self[(r, i)].conj() * self[(r, j)];
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc.conj();
            }
            out[(i, i)].im = 0.0;
        }
        out
    }

    /// `self * self^H`, Hermitian by construction.
    pub fn outer_gram(&self) -> Self {
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = C64::zero();
                for c in 0..self.cols {
                    acc += self[(i, c)] * self[(j, c)].conj();
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc.conj();
            }
            out[(i, i)].im = 0.0;
        }
        out
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |r, c| self[(rows[r], cols[c])])
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (r2, c2) = (other.rows, other.cols);
        Self::from_fn(self.rows * r2, self.cols * c2, |r, c| self[(r / r2, c / c2)] * other[(r % r2, c % c2)])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum::<f64>())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Spectral norm, from the largest eigenvalue of `self^H self`.
    pub fn op_norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        match hermitian_eigenvalues(&self.gram()) {
            Ok(ev) => libm::sqrt(ev.iter().copied().fold(0.0, f64::max).max(0.0)),
            Err(_) => self.frobenius(),
        }
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> C64 {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut det = C64::new(1.0, 0.0);
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[(i, k)].norm().total_cmp(&a[(j, k)].norm())).unwrap();
            if a[(piv, k)].norm() == 0.0 {
                return C64::zero();
            }
            if piv != k {
                for c in 0..n {
                    let t = a[(k, c)];
                    a[(k, c)] = a[(piv, c)];
                    a[(piv, c)] = t;
                }
                det = -det;
            }
            let p = a[(k, k)];
            det *= p;
            for r in k + 1..n {
                let f = a[(r, k)] / p;
                if f.norm() != 0.0 {
                    for c in k..n {
                        let akc = a[(k, c)];
                        a[(r, c)] -= f * akc;
                    }
                }
            }
        }
        det
    }

    /// Matrix exponential by scaling and squaring with a Taylor kernel.
    pub fn expm(&self) -> Self {
        assert!(self.is_square());
        let n = self.rows;
        let norm = self.data.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
        let mut squarings = 0u32;
        let mut scale = 1.0;
        while norm * scale > 0.25 {
            scale *= 0.5;
            squarings += 1;
        }
        let a = self.scale(C64::new(scale, 0.0));
        let mut term = Self::identity(n);
        let mut acc = Self::identity(n);
        for k in 1..=24 {
            term = term.mul(&a).scale(C64::new(1.0 / k as f64, 0.0));
            acc = acc.add(&term);
            if term.max_abs() < 1e-20 {
                break;
            }
        }
        for _ in 0..squarings {
            acc = acc.mul(&acc);
        }
        acc
    }
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors stored as columns.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

const JACOBI_MAX_SWEEPS: usize = 60;

fn jacobi(a: &CMatrix, want_vectors: bool) -> Result<(Vec<f64>, Option<CMatrix>)> {
    assert!(a.is_square(), "eigen-decomposition needs a square matrix");
    let n = a.rows();
    let mut m = a.clone();
    // Enforce exact Hermitian symmetry from the upper triangle.
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in i + 1..n {
            let z = m[(i, j)];
            m[(j, i)] = z.conj();
        }
    }
    let mut v = if want_vectors { Some(CMatrix::identity(n)) } else { None };
    let scale = m.frobenius();
    if scale == 0.0 || n <= 1 {
        let vals = (0..n).map(|i| m[(i, i)].re).collect();
        return Ok((vals, v));
    }
    let tol = 1e-17 * scale;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)].norm_sqr();
            }
        }
        if libm::sqrt(off) <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let g = apq.norm();
                if g <= 1e-300 || g < 1e-19 * scale {
                    continue;
                }
                let e = apq / g;
                let alpha = m[(p, p)].re;
                let beta = m[(q, q)].re;
                let tau = (beta - alpha) / (2.0 * g);
                let t = if tau >= 0.0 {
                    1.0 / (tau + libm::sqrt(1.0 + tau * tau))
                } else {
                    -1.0 / (-tau + libm::sqrt(1.0 + tau * tau))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                // J = [[c, s e], [-s conj(e), c]] on the (p, q) plane; A <- J^H A J.
                let se = e * s;
                let sec = e.conj() * s;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = akp * c - akq * sec;
                    m[(k, q)] = akp * se + akq * c;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = apk * c - aqk * se;
                    m[(q, k)] = apk * sec + aqk * c;
                }
                m[(p, q)] = C64::zero();
                m[(q, p)] = C64::zero();
                m[(p, p)].im = 0.0;
                m[(q, q)].im = 0.0;
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = vkp * c - vkq * sec;
                        v[(k, q)] = vkp * se + vkq * c;
                    }
                }
            }
        }
    }
    if !converged {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)].norm_sqr();
            }
        }
        if libm::sqrt(off) > 1e-12 * scale {
            return Err(Error::NoConvergence { context: "hermitian jacobi" });
        }
    }
    let vals: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    Ok((vals, v))
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Result<Vec<f64>> {
    let (mut vals, _) = jacobi(a, false)?;
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

pub fn hermitian_eigen(a: &CMatrix) -> Result<HermitianEigen> {
    let (vals, vecs) = jacobi(a, true)?;
    let vecs = vecs.expect("vectors requested");
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let values = order.iter().map(|&i| vals[i]).collect();
    let n = vals.len();
    let vectors = CMatrix::from_fn(n, n, |r, c| vecs[(r, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

/// `f(A)` for Hermitian `A` through its eigen-decomposition.
pub fn hermitian_function(a: &CMatrix, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
    let eig = hermitian_eigen(a)?;
    let n = a.rows();
    let v = &eig.vectors;
    Ok(CMatrix::from_fn(n, n, |r, c| {
        let mut acc = C64::zero();
        for k in 0..n {
            acc += v[(r, k)] * v[(c, k)].conj() * f(eig.values[k]);
        }
        acc
    }))
}

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Index<(usize, usize)> for RMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for RMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

impl RMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape { context: "ragged matrix rows" });
        }
        Ok(Self::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.data[r * self.cols..(r + 1) * self.cols].to_vec()).collect()
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        Self::from_fn(self.rows, other.cols, |r, c| (0..self.cols).map(|k| self[(r, k)] * other[(k, c)]).sum())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|r| (0..self.cols).map(|c| self[(r, c)] * v[c]).sum()).collect()
    }

    /// `v^T A v`
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let n = v.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self[(i, j)] * v[j];
            }
            acc += v[i] * row;
        }
        acc
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |r, c| self[(rows[r], cols[c])])
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        if n == 0 {
            return 1.0;
        }
        let mut a = self.clone();
        let mut det = 1.0;
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs())).unwrap();
            if a[(piv, k)] == 0.0 {
                return 0.0;
            }
            if piv != k {
                for c in 0..n {
                    let t = a[(k, c)];
                    a[(k, c)] = a[(piv, c)];
                    a[(piv, c)] = t;
                }
                det = -det;
            }
            let p = a[(k, k)];
            det *= p;
            for r in k + 1..n {
                let f = a[(r, k)] / p;
                if f != 0.0 {
                    for c in k..n {
                        a[(r, c)] -= f * a[(k, c)];
                    }
                }
            }
        }
        det
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let scale = self.max_abs().max(1e-300);
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs())).unwrap();
            if a[(piv, k)].abs() <= 1e-300 * scale {
                return Err(Error::Singular { context: "real inverse" });
            }
            if piv != k {
                for c in 0..n {
                    let t = a[(k, c)];
                    a[(k, c)] = a[(piv, c)];
                    a[(piv, c)] = t;
                    let t = inv[(k, c)];
                    inv[(k, c)] = inv[(piv, c)];
                    inv[(piv, c)] = t;
                }
            }
            let p = a[(k, k)];
            for c in 0..n {
                a[(k, c)] /= p;
                inv[(k, c)] /= p;
            }
            for r in 0..n {
                if r == k {
                    continue;
                }
                let f = a[(r, k)];
                if f != 0.0 {
                    for c in 0..n {
                        a[(r, c)] -= f * a[(k, c)];
                        inv[(r, c)] -= f * inv[(k, c)];
                    }
                }
            }
        }
        Ok(inv)
    }

    /// Ascending eigenvalues of a symmetric matrix.
    pub fn symmetric_eigenvalues(&self) -> Result<Vec<f64>> {
        hermitian_eigenvalues(&CMatrix::from_real(self))
    }

    /// Symmetric matrix function through the eigen-decomposition.
    pub fn symmetric_function(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let m = hermitian_function(&CMatrix::from_real(self), f)?;
        Ok(Self::from_fn(self.rows, self.cols, |r, c| m[(r, c)].re))
    }
}

/// Least-squares solution of `A x ≈ b` with column equilibration and
/// Householder QR. Returns the solution, the residual 2-norm and a condition
/// estimate of the equilibrated design matrix.
pub fn least_squares(a: &RMatrix, b: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let (m, n) = (a.rows(), a.cols());
    if m < n || b.len() != m {
        return Err(Error::Shape { context: "least squares needs rows >= cols" });
    }
    let col_scale: Vec<f64> = (0..n)
        .map(|c| {
            let s = libm::sqrt((0..m).map(|r| a[(r, c)] * a[(r, c)]).sum::<f64>());
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut q = RMatrix::from_fn(m, n, |r, c| a[(r, c)] / col_scale[c]);
    let mut rhs = b.to_vec();
    let mut diag = vec![0.0; n];
    for k in 0..n {
        let norm = libm::sqrt((k..m).map(|r| q[(r, k)] * q[(r, k)]).sum::<f64>());
        if norm == 0.0 {
            return Err(Error::Singular { context: "rank-deficient least squares" });
        }
        let alpha = if q[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|r| q[(r, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in k..n {
                let dot: f64 = (k..m).map(|r| v[r - k] * q[(r, c)]).sum();
                let f = 2.0 * dot / vnorm2;
                for r in k..m {
                    q[(r, c)] -= f * v[r - k];
                }
            }
            let dot: f64 = (k..m).map(|r| v[r - k] * rhs[r]).sum();
            let f = 2.0 * dot / vnorm2;
            for r in k..m {
                rhs[r] -= f * v[r - k];
            }
        }
        diag[k] = q[(k, k)];
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = rhs[k];
        for c in k + 1..n {
            s -= q[(k, c)] * x[c];
        }
        x[k] = s / q[(k, k)];
    }
    let residual = libm::sqrt(rhs[n..].iter().map(|r| r * r).sum::<f64>());
    // Condition estimate from the singular values of the triangular factor.
    let r_tri = RMatrix::from_fn(n, n, |i, j| if j >= i { q[(i, j)] } else { 0.0 });
    let sv = r_tri.transpose().mul(&r_tri).symmetric_eigenvalues()?;
    let smax = libm::sqrt(sv.last().copied().unwrap_or(0.0).max(0.0));
    let smin = libm::sqrt(sv.first().copied().unwrap_or(0.0).max(0.0));
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    for (xi, s) in x.iter_mut().zip(&col_scale) {
        *xi /= s;
    }
    let _ = diag;
    Ok((x, residual, cond))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(next(), 0.0);
            for j in i + 1..n {
                let z = C64::new(next(), next());
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (8, 4), (16, 5)] {
            let a = random_hermitian(n, seed);
            let eig = hermitian_eigen(&a).unwrap();
            let v = &eig.vectors;
            let d = CMatrix::diagonal(&eig.values.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>());
            let rec = v.mul(&d).mul(&v.adjoint());
            assert!(rec.sub(&a).max_abs() < 1e-13, "n={n}");
            let orth = v.adjoint().mul(v).sub(&CMatrix::identity(n));
            assert!(orth.max_abs() < 1e-13);
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn jacobi_handles_degenerate_spectrum() {
        let a = CMatrix::identity(4).scale(C64::new(3.0, 0.0));
        let ev = hermitian_eigenvalues(&a).unwrap();
        assert!(ev.iter().all(|&x| (x - 3.0).abs() < 1e-15));
    }

    #[test]
    fn determinant_and_inverse() {
        let g = RMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!((g.det() - 3.0).abs() < 1e-15);
        let gi = g.inverse().unwrap();
        let id = g.mul(&gi);
        assert!(id.sub(&RMatrix::identity(2)).max_abs() < 1e-15);
    }

    #[test]
    fn expm_of_nilpotent_is_polynomial() {
        let mut n = CMatrix::zeros(3, 3);
        n[(1, 0)] = C64::new(2.0, 0.0);
        n[(2, 1)] = C64::new(1.0, 0.0);
        let e = n.expm();
        // I + N + N^2/2
        let n2 = n.mul(&n).scale(C64::new(0.5, 0.0));
        let expect = CMatrix::identity(3).add(&n).add(&n2);
        assert!(e.sub(&expect).max_abs() < 1e-14);
    }

    #[test]
    fn least_squares_recovers_polynomial() {
        let ts: Vec<f64> = (0..20).map(|i| 0.1 + 0.05 * i as f64).collect();
        let a = RMatrix::from_fn(ts.len(), 3, |r, c| libm::pow(ts[r], c as f64));
        let b: Vec<f64> = ts.iter().map(|t| 1.5 - 2.0 * t + 0.25 * t * t).collect();
        let (x, res, cond) = least_squares(&a, &b).unwrap();
        assert!((x[0] - 1.5).abs() < 1e-12 && (x[1] + 2.0).abs() < 1e-12 && (x[2] - 0.25).abs() < 1e-12);
        assert!(res < 1e-12);
        assert!(cond.is_finite());
    }
}
