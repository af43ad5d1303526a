//! Small dense complex matrices and the instrumented operations the solvers
//! run through.
//!
//! [`CMat`] methods are plain and uncounted. Solver code goes through a
//! [`Tally`], whose methods perform the same operation and charge its
//! arithmetic cost, so that per-method operation counts come from what was
//! actually executed rather than from a formula.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;
// Float supplies libm-backed methods when std is absent.
#[allow(unused_imports)]
use num_traits::Float;
use num_traits::Zero;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Condition-number ceiling for Hermitian solves.
pub const COND_LIMIT: f64 = 1e12;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
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
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds from row-major data. Panics if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "CMat::from_vec: length mismatch");
        Self { rows, cols, data }
    }

    pub fn column_vector(v: &[C64]) -> Self {
        Self::from_vec(v.len(), 1, v.to_vec())
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

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Leading `n` columns.
    pub fn first_cols(&self, n: usize) -> CMat {
        CMat::from_fn(self.rows, n, |i, j| self[(i, j)])
    }

    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.cols, rhs.rows, "matmul: inner dimension mismatch");
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `self^H * rhs` without materialising the adjoint.
    pub fn adj_matmul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.rows, rhs.rows, "adj_matmul: inner dimension mismatch");
        let mut out = CMat::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self[(k, i)].conj();
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `self * rhs^H`.
    pub fn matmul_adj(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.cols, rhs.cols, "matmul_adj: inner dimension mismatch");
        CMat::from_fn(self.rows, rhs.rows, |i, j| {
            let mut s = C64::zero();
            for k in 0..self.cols {
                s += self[(i, k)] * rhs[(j, k)].conj();
            }
            s
        })
    }

    pub fn add(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.shape(), rhs.shape(), "add: shape mismatch");
        CMat::from_vec(self.rows, self.cols, self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.shape(), rhs.shape(), "sub: shape mismatch");
        CMat::from_vec(self.rows, self.cols, self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: C64) -> CMat {
        CMat::from_vec(self.rows, self.cols, self.data.iter().map(|a| a * s).collect())
    }

    pub fn scale_re(&self, s: f64) -> CMat {
        CMat::from_vec(self.rows, self.cols, self.data.iter().map(|a| a * s).collect())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn norm_fro_sq(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm_fro(&self) -> f64 {
        self.norm_fro_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// `(A + A^H) / 2`.
    pub fn hermitian_part(&self) -> CMat {
        let h = self.add(&self.adjoint());
        h.scale_re(0.5)
    }

    /// `‖A − A^H‖_F`.
    pub fn hermitian_defect(&self) -> f64 {
        self.sub(&self.adjoint()).norm_fro()
    }

    /// Real part of the Frobenius inner product `Re tr(A^H B)`.
    pub fn re_inner(&self, rhs: &CMat) -> f64 {
        assert_eq!(self.shape(), rhs.shape(), "re_inner: shape mismatch");
        self.data.iter().zip(&rhs.data).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Lower Cholesky factor of a Hermitian positive-definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: CMat,
}

impl Cholesky {
    /// Factorises `a`, reading only its lower triangle. Fails when a pivot is
    /// not positive or when the pivot spread implies a condition number above
    /// [`COND_LIMIT`].
    pub fn new(a: &CMat) -> Result<Self> {
        Self::factor(a, &mut Tally::default())
    }

    fn factor(a: &CMat, tally: &mut Tally) -> Result<Self> {
        let n = a.rows();
        if n != a.cols() {
            return Err(Error::Shape("cholesky of non-square matrix"));
        }
        let mut l = CMat::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            tally.real += 1 + 3 * j as u64;
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Singular);
            }
            let ljj = d.sqrt();
            tally.real += 1;
            l[(j, j)] = C64::new(ljj, 0.0);
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / ljj;
            }
            let below = (n - j - 1) as u64;
            tally.mul += below * j as u64;
            tally.add += below * j as u64;
            tally.real += 2 * below;
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for j in 0..n {
            let v = l[(j, j)].re;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if n > 0 && (hi / lo) * (hi / lo) > COND_LIMIT {
            return Err(Error::Singular);
        }
        tally.factorizations += 1;
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor_l(&self) -> &CMat {
        &self.l
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &CMat) -> CMat {
        self.solve_counted(b, &mut Tally::default())
    }

    fn solve_counted(&self, b: &CMat, tally: &mut Tally) -> CMat {
        let n = self.dim();
        assert_eq!(b.rows(), n, "cholesky solve: rhs row mismatch");
        let m = b.cols();
        let l = &self.l;
        let mut y = b.clone();
        // L y = b
        for i in 0..n {
            for k in 0..i {
                let lik = l[(i, k)];
                for j in 0..m {
                    let v = y[(k, j)];
                    y[(i, j)] -= lik * v;
                }
            }
            let d = l[(i, i)].re;
            for j in 0..m {
                y[(i, j)] /= d;
            }
        }
        // L^H x = y
        for i in (0..n).rev() {
            for k in i + 1..n {
                let lki = l[(k, i)].conj();
                for j in 0..m {
                    let v = y[(k, j)];
                    y[(i, j)] -= lki * v;
                }
            }
            let d = l[(i, i)].re;
            for j in 0..m {
                y[(i, j)] /= d;
            }
        }
        let tri = (n * n.saturating_sub(1)) as u64 * m as u64;
        tally.mul += tri;
        tally.add += tri;
        tally.real += 4 * (n * m) as u64;
        y
    }

    pub fn inverse(&self) -> CMat {
        self.solve(&CMat::identity(self.dim()))
    }
}

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Eigenvalues are returned in descending order; column `k` of the
/// returned matrix is the eigenvector for eigenvalue `k`.
pub fn hermitian_eig(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "hermitian_eig: matrix must be square");
    let mut m = a.hermitian_part();
    let mut v = CMat::identity(n);
    let scale = m.norm_fro().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let phase = apq / r;
                let (app, aqq) = (m[(p, p)].re, m[(q, q)].re);
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                // U = diag(1, conj(phase)) * [[c, s], [-s, c]] on the (p, q) plane.
                let upp = C64::new(cs, 0.0);
                let upq = C64::new(sn, 0.0);
                let uqp = -phase.conj() * sn;
                let uqq = phase.conj() * cs;
                for k in 0..n {
                    let (akp, akq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = akp * upp + akq * uqp;
                    m[(k, q)] = akp * upq + akq * uqq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = upp.conj() * apk + uqp.conj() * aqk;
                    m[(q, k)] = upq.conj() * apk + uqq.conj() * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = vkp * upp + vkq * uqp;
                    v[(k, q)] = vkp * upq + vkq * uqq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].re.total_cmp(&m[(i, i)].re));
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = CMat::from_fn(n, n, |r, k| v[(r, order[k])]);
    (values, vectors)
}

/// Arithmetic counters charged by instrumented operations.
///
/// `mul`/`add` count complex multiplications/additions, `real` counts
/// real-valued operations (divisions, square roots, moduli, real scalings),
/// and `factorizations` counts matrix factorizations (inversions).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub mul: u64,
    pub add: u64,
    pub real: u64,
    pub factorizations: u64,
}

impl Tally {
    pub fn new() -> Self {
        Self::default()
    }

    /// Real floating-point operations: 6 per complex multiply, 2 per complex add.
    pub fn flops(&self) -> u64 {
        6 * self.mul + 2 * self.add + self.real
    }

    pub fn merge(&mut self, other: &Tally) {
        self.mul += other.mul;
        self.add += other.add;
        self.real += other.real;
        self.factorizations += other.factorizations;
    }

    pub fn scaled(&self, k: u64) -> Tally {
        Tally {
            mul: self.mul * k,
            add: self.add * k,
            real: self.real * k,
            factorizations: self.factorizations * k,
        }
    }

    fn charge_product(&mut self, m: usize, k: usize, n: usize) {
        self.mul += (m * k * n) as u64;
        self.add += (m * n * k.saturating_sub(1)) as u64;
    }

    pub fn mul(&mut self, a: &CMat, b: &CMat) -> CMat {
        self.charge_product(a.rows(), a.cols(), b.cols());
        a.matmul(b)
    }

    pub fn adj_mul(&mut self, a: &CMat, b: &CMat) -> CMat {
        self.charge_product(a.cols(), a.rows(), b.cols());
        a.adj_matmul(b)
    }

    pub fn mul_adj(&mut self, a: &CMat, b: &CMat) -> CMat {
        self.charge_product(a.rows(), a.cols(), b.rows());
        a.matmul_adj(b)
    }

    pub fn add(&mut self, a: &CMat, b: &CMat) -> CMat {
        self.add += (a.rows() * a.cols()) as u64;
        a.add(b)
    }

    pub fn sub(&mut self, a: &CMat, b: &CMat) -> CMat {
        self.add += (a.rows() * a.cols()) as u64;
        a.sub(b)
    }

    pub fn scale_re(&mut self, a: &CMat, s: f64) -> CMat {
        self.real += 2 * (a.rows() * a.cols()) as u64;
        a.scale_re(s)
    }

    pub fn add_identity(&mut self, a: &CMat, s: f64) -> CMat {
        let mut out = a.clone();
        for i in 0..a.rows().min(a.cols()) {
            out[(i, i)] += s;
        }
        self.real += a.rows().min(a.cols()) as u64;
        out
    }

    pub fn trace(&mut self, a: &CMat) -> C64 {
        self.add += a.rows().min(a.cols()).saturating_sub(1) as u64;
        a.trace()
    }

    /// Real part of `tr(A B)` without forming the product.
    pub fn trace_of_product(&mut self, a: &CMat, b: &CMat) -> f64 {
        assert_eq!(a.cols(), b.rows());
        assert_eq!(a.rows(), b.cols());
        let mut s = 0.0;
        for i in 0..a.rows() {
            for k in 0..a.cols() {
                s += (a[(i, k)] * b[(k, i)]).re;
            }
        }
        let n = (a.rows() * a.cols()) as u64;
        self.real += 4 * n;
        s
    }

    pub fn norm_fro(&mut self, a: &CMat) -> f64 {
        self.real += 4 * (a.rows() * a.cols()) as u64 + 1;
        a.norm_fro()
    }

    pub fn cholesky(&mut self, a: &CMat) -> Result<Cholesky> {
        Cholesky::factor(a, self)
    }

    pub fn solve(&mut self, chol: &Cholesky, b: &CMat) -> CMat {
        chol.solve_counted(b, self)
    }

    /// Inverse of a Hermitian positive-definite matrix.
    pub fn inv_hpd(&mut self, a: &CMat) -> Result<CMat> {
        let ch = self.cholesky(a)?;
        Ok(self.solve(&ch, &CMat::identity(a.rows())))
    }

    /// Solves `A X = B` for Hermitian positive-definite `A`.
    pub fn solve_hpd(&mut self, a: &CMat, b: &CMat) -> Result<CMat> {
        let ch = self.cholesky(a)?;
        Ok(self.solve(&ch, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut impl Rng, r: usize, cl: usize) -> CMat {
        CMat::from_fn(r, cl, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn adjoint_products_agree_with_explicit_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, 4, 3);
        let b = random(&mut rng, 4, 5);
        let d = a.adj_matmul(&b).sub(&a.adjoint().matmul(&b));
        assert!(d.norm_fro() < 1e-14);
        let e = random(&mut rng, 5, 3);
        let d = a.matmul_adj(&e).sub(&a.matmul(&e.adjoint()));
        assert!(d.norm_fro() < 1e-14);
    }

    #[test]
    fn cholesky_solves_and_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random(&mut rng, 6, 6);
        let a = b.adj_matmul(&b).add(&CMat::identity(6).scale_re(0.1));
        let ch = Cholesky::new(&a).unwrap();
        let inv = ch.inverse();
        assert!(a.matmul(&inv).sub(&CMat::identity(6)).norm_fro() < 1e-10);
        let l = ch.factor_l();
        assert!(l.matmul_adj(l).sub(&a).norm_fro() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_singular_and_ill_conditioned() {
        let v = CMat::column_vector(&[c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0)]);
        let rank1 = v.matmul_adj(&v);
        assert_eq!(Cholesky::new(&rank1).unwrap_err(), Error::Singular);
        let mut d = CMat::identity(2);
        d[(1, 1)] = c(1e-13, 0.0);
        assert_eq!(Cholesky::new(&d).unwrap_err(), Error::Singular);
    }

    #[test]
    fn jacobi_diagonalises_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 8] {
            let b = random(&mut rng, n, n);
            let a = b.add(&b.adjoint());
            let (vals, vecs) = hermitian_eig(&a);
            let lam = CMat::from_fn(n, n, |i, j| if i == j { c(vals[i], 0.0) } else { C64::zero() });
            let resid = a.matmul(&vecs).sub(&vecs.matmul(&lam)).norm_fro();
            assert!(resid < 1e-10 * a.norm_fro().max(1.0), "n={n} resid={resid}");
            let orth = vecs.adj_matmul(&vecs).sub(&CMat::identity(n)).norm_fro();
            assert!(orth < 1e-10);
            assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn jacobi_handles_repeated_eigenvalues() {
        let v = CMat::column_vector(&[c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)]);
        let a = v.matmul_adj(&v).add(&CMat::identity(4));
        let (vals, vecs) = hermitian_eig(&a);
        assert!((vals[0] - 5.0).abs() < 1e-12);
        for &l in &vals[1..] {
            assert!((l - 1.0).abs() < 1e-12);
        }
        assert!(vecs.adj_matmul(&vecs).sub(&CMat::identity(4)).norm_fro() < 1e-10);
    }

    #[test]
    fn tally_charges_products() {
        let mut t = Tally::new();
        let a = CMat::zeros(3, 4);
        let b = CMat::zeros(4, 5);
        let _ = t.mul(&a, &b);
        assert_eq!(t.mul, 60);
        assert_eq!(t.add, 45);
        let _ = t.adj_mul(&b, &b);
        assert_eq!(t.mul, 60 + 5 * 4 * 5);
        assert_eq!(t.flops(), 6 * t.mul + 2 * t.add + t.real);
    }
}
