//! Floating-point abstraction shared by the linear algebra, the master-equation
//! engine and the simplex optimizer.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type: `f32` or `f64`.
///
/// Besides the usual float arithmetic this carries the dense matrix-product
/// kernels (row-major, backed by `matrixmultiply`) and the numerical
/// tolerances used to validate density matrices, which necessarily depend on
/// the precision.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Maximum entrywise |ρ − ρ†|.
    const HERMITIAN_TOL: f64;
    /// Maximum |Tr ρ − 1|.
    const TRACE_TOL: f64;
    /// Most negative eigenvalue tolerated.
    const EIGEN_FLOOR: f64;

    /// `c = a · b` for row-major `m×k` and `k×n` real matrices.
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]);

    /// `c = a · b` for row-major `m×k` and `k×n` complex matrices.
    fn cgemm(m: usize, k: usize, n: usize, a: &[Complex<Self>], b: &[Complex<Self>], c: &mut [Complex<Self>]);

    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn check_dims<T>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &[T]) {
    assert_eq!(a.len(), m * k, "gemm: lhs has wrong length");
    assert_eq!(b.len(), k * n, "gemm: rhs has wrong length");
    assert_eq!(c.len(), m * n, "gemm: output has wrong length");
}

impl Real for f64 {
    const HERMITIAN_TOL: f64 = 1e-10;
    const TRACE_TOL: f64 = 1e-8;
    const EIGEN_FLOOR: f64 = -1e-8;

    fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        check_dims(m, k, n, a, b, c);
        // SAFETY: slice lengths checked above; strides describe dense row-major storage.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }

    fn cgemm(m: usize, k: usize, n: usize, a: &[Complex<f64>], b: &[Complex<f64>], c: &mut [Complex<f64>]) {
        check_dims(m, k, n, a, b, c);
        // SAFETY: Complex<f64> is repr(C) with layout [re, im]; lengths checked above.
        unsafe {
            matrixmultiply::zgemm(
                matrixmultiply::CGemmOption::Standard,
                matrixmultiply::CGemmOption::Standard,
                m,
                k,
                n,
                [1.0, 0.0],
                a.as_ptr() as *const [f64; 2],
                k as isize,
                1,
                b.as_ptr() as *const [f64; 2],
                n as isize,
                1,
                [0.0, 0.0],
                c.as_mut_ptr() as *mut [f64; 2],
                n as isize,
                1,
            );
        }
    }
}

impl Real for f32 {
    const HERMITIAN_TOL: f64 = 1e-5;
    const TRACE_TOL: f64 = 1e-4;
    const EIGEN_FLOOR: f64 = -1e-4;

    fn gemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
        check_dims(m, k, n, a, b, c);
        // SAFETY: see the f64 implementation.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }

    fn cgemm(m: usize, k: usize, n: usize, a: &[Complex<f32>], b: &[Complex<f32>], c: &mut [Complex<f32>]) {
        check_dims(m, k, n, a, b, c);
        // SAFETY: Complex<f32> is repr(C) with layout [re, im]; lengths checked above.
        unsafe {
            matrixmultiply::cgemm(
                matrixmultiply::CGemmOption::Standard,
                matrixmultiply::CGemmOption::Standard,
                m,
                k,
                n,
                [1.0, 0.0],
                a.as_ptr() as *const [f32; 2],
                k as isize,
                1,
                b.as_ptr() as *const [f32; 2],
                n as isize,
                1,
                [0.0, 0.0],
                c.as_mut_ptr() as *mut [f32; 2],
                n as isize,
                1,
            );
        }
    }
}
