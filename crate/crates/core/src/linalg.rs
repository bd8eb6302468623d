//! Dense complex matrices and a Jacobi eigensolver for Hermitian matrices.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::scalar::Real;

/// Square or rectangular dense complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Wraps row-major data. Panics on a length mismatch.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Self {
        assert_eq!(data.len(), rows * cols, "CMatrix::from_vec length mismatch");
        Self { rows, cols, data }
    }

    /// Real diagonal matrix.
    pub fn diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex::new(d, T::zero());
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

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).fold(Complex::zero(), |a, b| a + b)
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn scale_real(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: Complex<T>, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "axpy shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|z| !z.is_zero()).count()
    }

    /// Matrix product that skips structural zeros.
    ///
    /// Operators in this crate are mostly sparse (ladder operators, atomic
    /// transition operators, basis matrices), so the product is formed with
    /// the sparser factor in the outer loop. When the right factor is the
    /// sparser one the identity `AB = (B†A†)†` is used.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        if rhs.nnz() < self.nnz() {
            return rhs.adjoint().matmul_sparse_left(&self.adjoint()).adjoint();
        }
        self.matmul_sparse_left(rhs)
    }

    fn matmul_sparse_left(&self, rhs: &Self) -> Self {
        let (m, k, n) = (self.rows, self.cols, rhs.cols);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            let row = &mut out.data[i * n..(i + 1) * n];
            for l in 0..k {
                let a = self.data[i * k + l];
                if a.is_zero() {
                    continue;
                }
                let brow = &rhs.data[l * n..(l + 1) * n];
                for (o, &b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Dense product through the `gemm` kernel.
    pub fn matmul_dense(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        T::cgemm(self.rows, self.cols, rhs.cols, &self.data, &rhs.data, &mut out.data);
        out
    }

    /// `[self, rhs] = self·rhs − rhs·self`.
    pub fn commutator(&self, rhs: &Self) -> Self {
        &self.matmul(rhs) - &rhs.matmul(self)
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &Self) -> Self {
        let (r2, c2) = (rhs.rows, rhs.cols);
        Self::from_fn(self.rows * r2, self.cols * c2, |i, j| self[(i / r2, j / c2)] * rhs[(i % r2, j % c2)])
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    /// Largest entrywise |A − A†|.
    pub fn hermiticity_error(&self) -> T {
        assert!(self.is_square());
        let n = self.rows;
        let mut worst = T::zero();
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Largest entrywise |A − B|.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(T::zero(), T::max)
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    /// Converts the element type.
    pub fn cast<U: Real>(&self) -> CMatrix<U> {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|z| Complex::new(U::lit(z.re.to_f64_lossy()), U::lit(z.im.to_f64_lossy())))
                .collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = Complex<T>;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Real> Add for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn add(self, rhs: Self) -> CMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn sub(self, rhs: Self) -> CMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<T: Real> Neg for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn neg(self) -> CMatrix<T> {
        self.map(|z| -z)
    }
}

impl<T: Real> Mul for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn mul(self, rhs: Self) -> CMatrix<T> {
        self.matmul(rhs)
    }
}

/// Eigenvalues of a Hermitian matrix, ascending.
///
/// The `n×n` Hermitian matrix `A + iB` is embedded in the real symmetric
/// `2n×2n` matrix `[[A, −B], [B, A]]`, whose spectrum is that of the original
/// with every eigenvalue doubled, and diagonalized with cyclic Jacobi
/// rotations.
pub fn hermitian_eigenvalues<T: Real>(m: &CMatrix<T>) -> Vec<T> {
    assert!(m.is_square(), "eigenvalues of a non-square matrix");
    let n = m.rows();
    if n == 0 {
        return Vec::new();
    }
    let size = 2 * n;
    let mut a = vec![T::zero(); size * size];
    for i in 0..n {
        for j in 0..n {
            // Symmetrize so that tiny anti-Hermitian noise cannot break the rotations.
            let z = (m[(i, j)] + m[(j, i)].conj()) * T::lit(0.5);
            a[i * size + j] = z.re;
            a[(i + n) * size + (j + n)] = z.re;
            a[i * size + (j + n)] = -z.im;
            a[(i + n) * size + j] = z.im;
        }
    }
    let mut eig = jacobi_symmetric(&mut a, size);
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    // Each eigenvalue appears twice; keep one of each pair.
    eig.into_iter().step_by(2).collect()
}

/// Cyclic Jacobi diagonalization of a real symmetric matrix stored row-major.
/// Destroys `a`; returns the (unsorted) eigenvalues.
fn jacobi_symmetric<T: Real>(a: &mut [T], n: usize) -> Vec<T> {
    const MAX_SWEEPS: usize = 100;
    let frob: T = a.iter().map(|&x| x * x).sum::<T>().sqrt();
    let eps = T::epsilon() * T::lit(0.5);
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= eps * frob || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        Complex::new(re, im)
    }

    fn random_matrix(n: usize, seed: u64) -> CMatrix<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMatrix::from_fn(n, n, |_, _| c(next(), next()))
    }

    #[test]
    fn sparse_aware_product_matches_gemm() {
        let a = random_matrix(7, 1);
        let mut b = CMatrix::zeros(7, 7);
        b[(2, 3)] = c(1.5, -0.5);
        b[(6, 0)] = c(0.0, 2.0);
        assert!(a.matmul(&b).max_abs_diff(&a.matmul_dense(&b)) < 1e-14);
        assert!(b.matmul(&a).max_abs_diff(&b.matmul_dense(&a)) < 1e-14);
        assert!(a.matmul(&a).max_abs_diff(&a.matmul_dense(&a)) < 1e-13);
    }

    #[test]
    fn kron_of_identities_is_identity() {
        let k = CMatrix::<f64>::identity(2).kron(&CMatrix::identity(3));
        assert_eq!(k, CMatrix::identity(6));
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // Pauli Y has eigenvalues ±1.
        let mut y = CMatrix::<f64>::zeros(2, 2);
        y[(0, 1)] = c(0.0, -1.0);
        y[(1, 0)] = c(0.0, 1.0);
        let e = hermitian_eigenvalues(&y);
        assert!((e[0] + 1.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12);

        let d = CMatrix::<f64>::diagonal(&[3.0, -2.0, 0.5]);
        let e = hermitian_eigenvalues(&d);
        assert_eq!(e.len(), 3);
        for (x, y) in e.iter().zip([-2.0, 0.5, 3.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn eigenvalues_sum_to_trace_and_squares_to_frobenius(seed in 0u64..1000, n in 1usize..7) {
            let a = random_matrix(n, seed);
            let h = &a + &a.adjoint();
            let e = hermitian_eigenvalues(&h);
            let tr: f64 = e.iter().sum();
            prop_assert!((tr - h.trace().re).abs() < 1e-10);
            let fro: f64 = h.as_slice().iter().map(|z| z.norm_sqr()).sum();
            let sq: f64 = e.iter().map(|x| x * x).sum();
            prop_assert!((fro - sq).abs() < 1e-9 * fro.max(1.0));
        }
    }
}
