//! Small dense complex linear algebra.
//!
//! Everything here is sized for Hilbert spaces of a few dozen states, so the
//! storage is a flat row-major `Vec` and the eigensolver is cyclic Jacobi.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use num_complex::Complex64 as C64;
#[allow(unused_imports)]
use num_traits::Float;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawMatrix"))]
pub struct CMatrix {
    n: usize,
    data: Vec<C64>,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawMatrix {
    n: usize,
    data: Vec<C64>,
}

#[cfg(feature = "serde")]
impl TryFrom<RawMatrix> for CMatrix {
    type Error = alloc::string::String;

    fn try_from(raw: RawMatrix) -> core::result::Result<Self, Self::Error> {
        if raw.data.len() != raw.n * raw.n {
            return Err(alloc::format!("matrix data has {} entries, expected {}", raw.data.len(), raw.n * raw.n));
        }
        Ok(Self { n: raw.n, data: raw.data })
    }
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds from row-major data. Panics if `data.len() != n * n`.
    pub fn from_vec(n: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), n * n, "matrix data length");
        Self { n, data }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Outer product |u><v|.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        assert_eq!(u.len(), v.len());
        Self::from_fn(u.len(), |i, j| u[i] * v[j].conj())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&x| x * s).collect() }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: C64, other: &Self) {
        debug_assert_eq!(self.n, other.n);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "matmul dimension");
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let orow = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    /// Tr(self * other) without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        let n = self.n;
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += self.data[i * n + k] * other.data[k * n + i];
            }
        }
        acc
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.n, other.n);
        Self::from_fn(n * m, |r, c| self[(r / m, c / m)] * other[(r % m, c % m)])
    }

    /// Largest absolute entry-wise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let mut err = 0.0f64;
        for i in 0..self.n {
            for j in i..self.n {
                err = err.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        err
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Replaces the matrix by (M + M^dag)/2.
    pub fn hermitize(&mut self) {
        let n = self.n;
        for i in 0..n {
            self.data[i * n + i].im = 0.0;
            for j in i + 1..n {
                let avg = (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5;
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg.conj();
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n);
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n);
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        self.axpy(ONE, rhs);
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// Coordinate-format sparse matrix, used on the integration hot path.
#[derive(Debug, Clone, Default)]
pub struct SparseMatrix {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseMatrix {
    pub fn from_dense(m: &CMatrix, tol: f64) -> Self {
        let n = m.dim();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)].norm() > tol {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self { dim: n, entries }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `out += s * self * x`
    #[inline]
    pub fn mul_dense_acc(&self, s: C64, x: &CMatrix, out: &mut CMatrix) {
        let n = self.dim;
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for &(i, k, v) in &self.entries {
            let a = s * v;
            let src = &xs[k * n..(k + 1) * n];
            let dst = &mut os[i * n..(i + 1) * n];
            for (d, &b) in dst.iter_mut().zip(src) {
                *d += a * b;
            }
        }
    }

    /// `out += s * x * self`
    #[inline]
    pub fn dense_mul_acc(&self, s: C64, x: &CMatrix, out: &mut CMatrix) {
        let n = self.dim;
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for &(k, j, v) in &self.entries {
            let a = s * v;
            for i in 0..n {
                os[i * n + j] += a * xs[i * n + k];
            }
        }
    }

    /// `out += s * self * x * self^dag`
    #[inline]
    pub fn sandwich_acc(&self, s: C64, x: &CMatrix, out: &mut CMatrix) {
        let n = self.dim;
        let xs = x.as_slice();
        let os = out.as_mut_slice();
        for &(i, j, v) in &self.entries {
            let sv = s * v;
            for &(k, l, w) in &self.entries {
                os[i * n + k] += sv * xs[j * n + l] * w.conj();
            }
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Eigenvectors; `vectors[k]` belongs to `values[k]`.
    pub vectors: Vec<Vec<C64>>,
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
pub fn eigh(m: &CMatrix) -> HermitianEigen {
    let n = m.dim();
    let mut a = m.clone();
    a.hermitize();
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius_norm().max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[(i, j)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= 1e-300 || r <= 1e-17 * scale {
                    continue;
                }
                let phase = apq / r;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U acts on the (p, q) plane: U = D * R with D = diag(1, e^{-i arg apq}).
                let upp = C64::new(c, 0.0);
                let upq = C64::new(s, 0.0);
                let uqp = -phase.conj() * s;
                let uqq = phase.conj() * c;
                // columns: A <- A U
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * upp + akq * uqp;
                    a[(k, q)] = akp * upq + akq * uqq;
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * upp + vkq * uqp;
                    v[(k, q)] = vkp * upq + vkq * uqq;
                }
                // rows: A <- U^dag A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = upp.conj() * apk + uqp.conj() * aqk;
                    a[(q, k)] = upq.conj() * apk + uqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)].im = 0.0;
                a[(q, q)].im = 0.0;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    let values = order.iter().map(|&k| a[(k, k)].re).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..n).map(|r| v[(r, k)]).collect())
        .collect();
    HermitianEigen { values, vectors }
}

/// Inner product <u|v>.
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    eigh(m).values.first().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn jacobi_reconstructs_hermitian_matrix() {
        let m = CMatrix::from_vec(
            3,
            vec![
                c(2.0, 0.0),
                c(1.0, -0.5),
                c(0.0, 0.3),
                c(1.0, 0.5),
                c(-1.0, 0.0),
                c(0.7, 0.0),
                c(0.0, -0.3),
                c(0.7, 0.0),
                c(0.5, 0.0),
            ],
        );
        let e = eigh(&m);
        let mut rebuilt = CMatrix::zeros(3);
        for (lam, vec) in e.values.iter().zip(&e.vectors) {
            rebuilt.axpy(c(*lam, 0.0), &CMatrix::outer(vec, vec));
        }
        assert!(rebuilt.max_abs_diff(&m) < 1e-12);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let tr: f64 = e.values.iter().sum();
        assert!((tr - 1.5).abs() < 1e-12);
    }

    #[test]
    fn pauli_y_eigenvalues() {
        let y = CMatrix::from_vec(2, vec![ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]);
        let e = eigh(&y);
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sparse_kernels_match_dense() {
        let a = CMatrix::from_fn(4, |i, j| if (i + j) % 3 == 0 { c(i as f64, j as f64 * 0.5) } else { ZERO });
        let x = CMatrix::from_fn(4, |i, j| c((i * 4 + j) as f64 * 0.1, (i as f64) - (j as f64)));
        let sa = SparseMatrix::from_dense(&a, 0.0);
        let mut out = CMatrix::zeros(4);
        sa.mul_dense_acc(ONE, &x, &mut out);
        assert!(out.max_abs_diff(&a.matmul(&x)) < 1e-12);
        let mut out = CMatrix::zeros(4);
        sa.dense_mul_acc(ONE, &x, &mut out);
        assert!(out.max_abs_diff(&x.matmul(&a)) < 1e-12);
        let mut out = CMatrix::zeros(4);
        sa.sandwich_acc(ONE, &x, &mut out);
        assert!(out.max_abs_diff(&a.matmul(&x).matmul(&a.dagger())) < 1e-12);
    }

    #[test]
    fn kron_of_identities() {
        let k = CMatrix::identity(2).kron(&CMatrix::identity(3));
        assert_eq!(k, CMatrix::identity(6));
    }
}
