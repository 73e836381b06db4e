//! Dense complex matrices and factorizations.
//!
//! `CMat` is a row-major complex matrix tuned for Nyström assembly (parallel
//! row-block writes). Factorizations (LU, SVD, self-adjoint eigen) are
//! delegated to `faer`; conversions at that boundary are `O(n^2)` and
//! negligible next to the `O(n^3)` work they front.

use faer::complex_native::c64;
use faer::prelude::*;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::OperatorError;

pub type C = Complex64;

pub const C_ZERO: C = Complex64::new(0.0, 0.0);
pub const C_ONE: C = Complex64::new(1.0, 0.0);

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C>,
}

impl std::fmt::Debug for CMat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CMat {}x{}", self.rows, self.cols)
    }
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![C_ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C_ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[C] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [C] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Parallel fill by row blocks of `block` rows each; `f` writes one block.
    pub fn par_fill_rows(&mut self, block: usize, f: impl Fn(usize, &mut [C]) + Sync) {
        let cols = self.cols;
        self.data
            .par_chunks_mut(block * cols)
            .enumerate()
            .for_each(|(bi, chunk)| f(bi * block, chunk));
    }

    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scaled(&self, s: C) -> CMat {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, o: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        let mut out = self.clone();
        out.data.iter_mut().zip(&o.data).for_each(|(a, b)| *a += *b);
        out
    }

    pub fn sub(&self, o: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        let mut out = self.clone();
        out.data.iter_mut().zip(&o.data).for_each(|(a, b)| *a -= *b);
        out
    }

    pub fn matvec(&self, x: &[C]) -> Vec<C> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .into_par_iter()
            .map(|r| {
                let row = self.row(r);
                let mut acc = C_ZERO;
                for (a, b) in row.iter().zip(x) {
                    acc += a * b;
                }
                acc
            })
            .collect()
    }

    /// Dense product via faer's gemm.
    pub fn matmul(&self, o: &CMat) -> CMat {
        assert_eq!(self.cols, o.rows);
        let a = self.to_faer();
        let b = o.to_faer();
        CMat::from_faer(&(&a * &b))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn to_faer(&self) -> Mat<c64> {
        Mat::from_fn(self.rows, self.cols, |i, j| {
            let z = self[(i, j)];
            c64::new(z.re, z.im)
        })
    }

    pub fn from_faer(m: &Mat<c64>) -> CMat {
        CMat::from_fn(m.nrows(), m.ncols(), |i, j| {
            let v = m[(i, j)];
            C::new(v.re, v.im)
        })
    }

    /// Solves `A X = B` by partial-pivot LU.
    pub fn solve(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.rows, self.cols);
        assert_eq!(self.rows, rhs.rows);
        let lu = self.to_faer().partial_piv_lu();
        CMat::from_faer(&lu.solve(&rhs.to_faer()))
    }

    pub fn solve_vec(&self, b: &[C]) -> Vec<C> {
        let rhs = CMat { rows: b.len(), cols: 1, data: b.to_vec() };
        self.solve(&rhs).data
    }

    /// LU inverse gated on numerical invertibility: if the product residual
    /// `||A A^{-1} - I||_max` exceeds `residual_tol`, the singular values are
    /// computed and a `Singular` error carrying `sigma_min` is returned.
    pub fn inverse_checked(&self, residual_tol: f64) -> Result<(CMat, f64), OperatorError> {
        assert_eq!(self.rows, self.cols);
        let lu = self.to_faer().partial_piv_lu();
        let inv = CMat::from_faer(&lu.inverse());
        if !inv.data.iter().all(|z| z.is_finite()) {
            let (smin, smax) = self.sigma_extremes();
            return Err(OperatorError::Singular { sigma_min: smin, sigma_max: smax });
        }
        let prod = self.matmul(&inv);
        let mut residual: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let want = if i == j { C_ONE } else { C_ZERO };
                residual = residual.max((prod[(i, j)] - want).norm());
            }
        }
        if residual > residual_tol {
            let (smin, smax) = self.sigma_extremes();
            if smin / smax <= 1e-12 {
                return Err(OperatorError::Singular { sigma_min: smin, sigma_max: smax });
            }
        }
        Ok((inv, residual))
    }

    /// All singular values, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let svd = self.to_faer().svd();
        let s = svd.s_diagonal();
        (0..s.nrows()).map(|i| s[i].re).collect()
    }

    pub fn sigma_extremes(&self) -> (f64, f64) {
        let s = self.singular_values();
        (*s.last().unwrap(), s[0])
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_extremes().0
    }

    /// Spectral norm (largest singular value).
    pub fn norm2(&self) -> f64 {
        self.sigma_extremes().1
    }

    /// Moore-Penrose pseudoinverse with singular values below
    /// `rcond * sigma_max` treated as zero.
    pub fn pinv(&self, rcond: f64) -> CMat {
        let svd = self.to_faer().svd();
        let s = svd.s_diagonal();
        let rank = s.nrows();
        let smax = s[0].re;
        let u = svd.u();
        let v = svd.v();
        let mut out = CMat::zeros(self.cols, self.rows);
        for t in 0..rank {
            let sv = s[t].re;
            if sv <= rcond * smax {
                break;
            }
            let inv = 1.0 / sv;
            for r in 0..self.cols {
                let vr = v[(r, t)];
                let vrc = C::new(vr.re, vr.im) * inv;
                for c in 0..self.rows {
                    let uc = u[(c, t)];
                    out[(r, c)] += vrc * C::new(uc.re, uc.im).conj();
                }
            }
        }
        out
    }

    /// Eigenvalues of a (numerically) hermitian matrix, ascending.
    pub fn eigh_values(&self) -> Vec<f64> {
        assert_eq!(self.rows, self.cols);
        let evd = self.to_faer().selfadjoint_eigendecomposition(faer::Side::Lower);
        let s = evd.s().column_vector().to_owned();
        (0..self.rows).map(|i| s[i].re).collect()
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C {
        &mut self.data[r * self.cols + c]
    }
}

/// A linear operator given by its action, for matrix-free iterative solves.
pub trait LinOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C]) -> Vec<C>;
}

impl LinOp for CMat {
    fn dim(&self) -> usize {
        self.rows
    }
    fn apply(&self, x: &[C]) -> Vec<C> {
        self.matvec(x)
    }
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [C], a: C, x: &[C]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Unpreconditioned BiCGStab for well-conditioned dense operators applied
/// matrix-free. Returns the solution once the relative residual drops below
/// `tol`; errors out with the achieved residual otherwise.
pub fn bicgstab(op: &dyn LinOp, b: &[C], tol: f64, max_iter: usize) -> Result<Vec<C>, OperatorError> {
    let n = op.dim();
    assert_eq!(b.len(), n);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(vec![C_ZERO; n]);
    }
    let mut x = vec![C_ZERO; n];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let mut rho = C_ONE;
    let mut alpha = C_ONE;
    let mut omega = C_ONE;
    let mut v = vec![C_ZERO; n];
    let mut p = vec![C_ZERO; n];
    let mut best = f64::INFINITY;
    for _it in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.norm() < 1e-300 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        // p = r + beta (p - omega v)
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        v = op.apply(&p);
        alpha = rho / dot(&r0, &v);
        let mut s = r.clone();
        axpy(&mut s, -alpha, &v);
        if norm(&s) / b_norm < tol {
            axpy(&mut x, alpha, &p);
            return Ok(x);
        }
        let t = op.apply(&s);
        omega = dot(&t, &s) / dot(&t, &t);
        axpy(&mut x, alpha, &p);
        axpy(&mut x, omega, &s);
        r = s;
        axpy(&mut r, -omega, &t);
        let rel = norm(&r) / b_norm;
        best = best.min(rel);
        if rel < tol {
            return Ok(x);
        }
    }
    let final_res = norm(&r) / b_norm;
    if final_res < tol {
        Ok(x)
    } else {
        Err(OperatorError::NoConvergence { residual: final_res, iters: max_iter })
    }
}
