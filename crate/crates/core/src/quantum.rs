//! Composite Hilbert spaces, operators and density matrices.
//!
//! The ion–cavity system lives on `atom ⊗ cavity` with the atomic factor
//! first. Every constructor takes the [`HilbertSpace`] explicitly so that
//! operators built for different factor orderings cannot be mixed.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, CMatrix};
use crate::scalar::Real;

/// Ordered list of subsystem dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    dims: Vec<usize>,
}

impl HilbertSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Dimension("a Hilbert space needs at least one factor".into()));
        }
        if let Some(d) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::Dimension(format!("subsystem dimension {d} must be at least 1")));
        }
        Ok(Self { dims })
    }

    /// `atom ⊗ cavity` with four atomic levels and Fock states `0..=n_max`.
    pub fn atom_cavity(n_max: usize) -> Self {
        Self { dims: vec![ATOM_LEVELS, n_max + 1] }
    }

    pub fn single(dim: usize) -> Result<Self> {
        Self::new(vec![dim])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn factors(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.dims.len() {
            return Err(Error::SubsystemIndex { index, factors: self.dims.len() });
        }
        Ok(())
    }
}

/// Number of atomic levels kept in the model.
pub const ATOM_LEVELS: usize = 4;

/// Atomic level identifiers.
///
/// The primed levels of the second qubit transition reuse the slots of their
/// unprimed counterparts: the model always has four atomic states
/// `{S, D, P, S′}` or `{S, D′, P′, S′}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    S,
    D,
    P,
    /// Dark state collecting spontaneous emission out of the model.
    SPrime,
    DPrime,
    PPrime,
}

impl Level {
    /// Index of the level inside the four-dimensional atomic factor.
    pub fn slot(self) -> usize {
        match self {
            Level::S => 0,
            Level::D | Level::DPrime => 1,
            Level::P | Level::PPrime => 2,
            Level::SPrime => 3,
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "S" => Ok(Level::S),
            "D" => Ok(Level::D),
            "P" => Ok(Level::P),
            "S'" | "S′" | "Sp" => Ok(Level::SPrime),
            "D'" | "D′" | "Dp" => Ok(Level::DPrime),
            "P'" | "P′" | "Pp" => Ok(Level::PPrime),
            other => Err(Error::UnknownLevel(other.to_string())),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Level::S => "S",
            Level::D => "D",
            Level::P => "P",
            Level::SPrime => "S'",
            Level::DPrime => "D'",
            Level::PPrime => "P'",
        };
        f.write_str(s)
    }
}

/// Linear operator on a [`HilbertSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct Operator<T> {
    space: HilbertSpace,
    matrix: CMatrix<T>,
}

impl<T: Real> Operator<T> {
    pub fn new(space: HilbertSpace, matrix: CMatrix<T>) -> Result<Self> {
        let d = space.dim();
        if matrix.rows() != d || matrix.cols() != d {
            return Err(Error::Dimension(format!(
                "operator matrix is {}x{} but the space has dimension {d}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(Self { space, matrix })
    }

    pub fn zero(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self { space: space.clone(), matrix: CMatrix::zeros(d, d) }
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        Self { space: space.clone(), matrix: CMatrix::identity(space.dim()) }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self { space: self.space.clone(), matrix: self.matrix.adjoint() }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { space: self.space.clone(), matrix: self.matrix.scale_real(s) }
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.same_space(rhs)?;
        Ok(Self { space: self.space.clone(), matrix: self.matrix.matmul(&rhs.matrix) })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.same_space(rhs)?;
        Ok(Self { space: self.space.clone(), matrix: &self.matrix + &rhs.matrix })
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.same_space(rhs)?;
        Ok(Self { space: self.space.clone(), matrix: &self.matrix - &rhs.matrix })
    }

    /// `self += s · rhs`.
    pub fn add_scaled(&mut self, s: T, rhs: &Self) -> Result<()> {
        self.same_space(rhs)?;
        self.matrix.axpy(Complex::new(s, T::zero()), &rhs.matrix);
        Ok(())
    }

    pub fn commutator(&self, rhs: &Self) -> Result<Self> {
        self.same_space(rhs)?;
        Ok(Self { space: self.space.clone(), matrix: self.matrix.commutator(&rhs.matrix) })
    }

    pub fn hermiticity_error(&self) -> T {
        self.matrix.hermiticity_error()
    }

    /// Largest |diagonal entry|, the fastest frame frequency of a Hamiltonian.
    pub fn max_abs_diagonal(&self) -> T {
        (0..self.matrix.rows()).map(|i| self.matrix[(i, i)].norm()).fold(T::zero(), T::max)
    }

    fn same_space(&self, rhs: &Self) -> Result<()> {
        if self.space != rhs.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }
}

/// Validated density matrix: Hermitian, unit trace, positive semidefinite
/// within the scalar type's tolerances (see [`Real`]).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T> {
    space: HilbertSpace,
    matrix: CMatrix<T>,
}

/// Measured deviations from the density-matrix invariants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDiagnostics {
    pub hermiticity_error: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(space: HilbertSpace, matrix: CMatrix<T>) -> Result<Self> {
        let op = Operator::new(space, matrix)?;
        let rho = Self { space: op.space, matrix: op.matrix };
        let diag = rho.diagnostics();
        if diag.hermiticity_error > T::HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian: max |rho - rho^dag| = {:e}",
                diag.hermiticity_error
            )));
        }
        if diag.trace_error > T::TRACE_TOL {
            return Err(Error::InvalidState(format!("trace off by {:e}", diag.trace_error)));
        }
        if diag.min_eigenvalue < T::EIGEN_FLOOR {
            return Err(Error::InvalidState(format!("negative eigenvalue {:e}", diag.min_eigenvalue)));
        }
        Ok(rho)
    }

    /// Wraps a matrix already known to satisfy the invariants (dimensions are
    /// still checked).
    pub(crate) fn new_unchecked(space: HilbertSpace, matrix: CMatrix<T>) -> Self {
        debug_assert_eq!(matrix.rows(), space.dim());
        Self { space, matrix }
    }

    /// `|ψ⟩⟨ψ|` for a normalized state vector.
    pub fn pure(space: HilbertSpace, psi: &[Complex<T>]) -> Result<Self> {
        let d = space.dim();
        if psi.len() != d {
            return Err(Error::Dimension(format!("state vector has {} entries, expected {d}", psi.len())));
        }
        let m = CMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj());
        Self::new(space, m)
    }

    /// Basis projector `|i⟩⟨i|` on the full space.
    pub fn basis(space: HilbertSpace, index: usize) -> Result<Self> {
        let d = space.dim();
        if index >= d {
            return Err(Error::Dimension(format!("basis index {index} out of range {d}")));
        }
        let mut m = CMatrix::zeros(d, d);
        m[(index, index)] = Complex::one();
        Ok(Self::new_unchecked(space, m))
    }

    /// `ρ_A ⊗ ρ_B` on the concatenated space.
    pub fn product(a: &Self, b: &Self) -> Result<Self> {
        let mut dims = a.space.dims.clone();
        dims.extend_from_slice(&b.space.dims);
        let space = HilbertSpace::new(dims)?;
        Self::new(space, a.matrix.kron(&b.matrix))
    }

    /// Coherent state `|α⟩` on a single Fock factor `0..=n_max`, from the
    /// truncated number-state series, renormalized after truncation.
    pub fn coherent(n_max: usize, alpha: Complex<T>) -> Result<Self> {
        let space = HilbertSpace::single(n_max + 1)?;
        let mut psi = Vec::with_capacity(n_max + 1);
        let mut term = Complex::<T>::one();
        for n in 0..=n_max {
            if n > 0 {
                term = term * alpha / T::lit(n as f64).sqrt();
            }
            psi.push(term);
        }
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        for z in &mut psi {
            *z /= norm;
        }
        Self::pure(space, &psi)
    }

    /// Thermal state with mean occupation `n_bar` (geometric distribution
    /// truncated at `n_max` and renormalized).
    pub fn thermal(n_max: usize, n_bar: T) -> Result<Self> {
        if n_bar < T::zero() {
            return Err(Error::InvalidParameter("thermal occupation must be non-negative".into()));
        }
        let ratio = n_bar / (T::one() + n_bar);
        let weights: Vec<T> = (0..=n_max).map(|n| ratio.powi(n as i32)).collect();
        let total: T = weights.iter().copied().sum();
        let diag: Vec<T> = weights.iter().map(|&w| w / total).collect();
        Self::new(HilbertSpace::single(n_max + 1)?, CMatrix::diagonal(&diag))
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }

    pub fn trace(&self) -> T {
        self.matrix.trace().re
    }

    /// Real parts of the diagonal (populations).
    pub fn populations(&self) -> Vec<T> {
        (0..self.matrix.rows()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn diagnostics(&self) -> StateDiagnostics {
        let eig = hermitian_eigenvalues(&self.matrix);
        StateDiagnostics {
            hermiticity_error: self.matrix.hermiticity_error().to_f64_lossy(),
            trace_error: (self.matrix.trace() - Complex::one()).norm().to_f64_lossy(),
            min_eigenvalue: eig.first().copied().unwrap_or_else(T::zero).to_f64_lossy(),
        }
    }

    pub fn as_operator(&self) -> Operator<T> {
        Operator { space: self.space.clone(), matrix: self.matrix.clone() }
    }
}

/// Truncated annihilation operator `a` on Fock states `0..=n_max`.
pub fn fock_annihilation<T: Real>(n_max: usize) -> Result<Operator<T>> {
    if n_max < 1 {
        return Err(Error::Dimension("Fock truncation n_max must be at least 1".into()));
    }
    let d = n_max + 1;
    let mut m = CMatrix::zeros(d, d);
    for n in 1..d {
        m[(n - 1, n)] = Complex::new(T::lit(n as f64).sqrt(), T::zero());
    }
    Operator::new(HilbertSpace::single(d)?, m)
}

/// Number operator `a†a` on Fock states `0..=n_max`.
pub fn fock_number<T: Real>(n_max: usize) -> Result<Operator<T>> {
    let a = fock_annihilation::<T>(n_max)?;
    a.adjoint().mul(&a)
}

/// `|to⟩⟨from|` on the atomic factor (index 0), identity on the other factors.
pub fn atomic_operator<T: Real>(space: &HilbertSpace, from: Level, to: Level) -> Result<Operator<T>> {
    if space.dims()[0] != ATOM_LEVELS {
        return Err(Error::Dimension(format!(
            "atomic factor must have {ATOM_LEVELS} levels, found {}",
            space.dims()[0]
        )));
    }
    let mut m = CMatrix::zeros(ATOM_LEVELS, ATOM_LEVELS);
    m[(to.slot(), from.slot())] = Complex::one();
    let op = Operator::new(HilbertSpace::single(ATOM_LEVELS)?, m)?;
    embed(space, &op, 0)
}

/// Tensors a single-factor operator into `space` at `subsystem_index`.
pub fn embed<T: Real>(space: &HilbertSpace, op: &Operator<T>, subsystem_index: usize) -> Result<Operator<T>> {
    space.check_index(subsystem_index)?;
    let target = space.dims()[subsystem_index];
    if op.space.dim() != target {
        return Err(Error::Dimension(format!(
            "operator has dimension {} but factor {subsystem_index} has dimension {target}",
            op.space.dim()
        )));
    }
    let before: usize = space.dims()[..subsystem_index].iter().product();
    let after: usize = space.dims()[subsystem_index + 1..].iter().product();
    let m = CMatrix::identity(before).kron(&op.matrix).kron(&CMatrix::identity(after));
    Operator::new(space.clone(), m)
}

/// Reduced state of factor `keep`, tracing out every other factor.
pub fn partial_trace<T: Real>(rho: &DensityMatrix<T>, keep: usize) -> Result<DensityMatrix<T>> {
    let m = partial_trace_matrix(rho.space(), rho.matrix(), keep)?;
    DensityMatrix::new(HilbertSpace::single(rho.space().dims()[keep])?, m)
}

/// Partial trace of an arbitrary (not necessarily physical) matrix.
pub fn partial_trace_matrix<T: Real>(space: &HilbertSpace, m: &CMatrix<T>, keep: usize) -> Result<CMatrix<T>> {
    space.check_index(keep)?;
    let dims = space.dims();
    let dk = dims[keep];
    let before: usize = dims[..keep].iter().product();
    let after: usize = dims[keep + 1..].iter().product();
    let mut out = CMatrix::zeros(dk, dk);
    for a in 0..dk {
        for b in 0..dk {
            let mut acc = Complex::zero();
            for x in 0..before {
                for y in 0..after {
                    let i = (x * dk + a) * after + y;
                    let j = (x * dk + b) * after + y;
                    acc += m[(i, j)];
                }
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// `Tr(ρ · op)`.
pub fn expectation<T: Real>(rho: &DensityMatrix<T>, op: &Operator<T>) -> Result<Complex<T>> {
    if rho.space() != op.space() {
        return Err(Error::SpaceMismatch);
    }
    let (r, o) = (rho.matrix(), op.matrix());
    let d = r.rows();
    let mut acc = Complex::zero();
    for i in 0..d {
        for k in 0..d {
            let x = o[(k, i)];
            if !x.is_zero() {
                acc += r[(i, k)] * x;
            }
        }
    }
    Ok(acc)
}
