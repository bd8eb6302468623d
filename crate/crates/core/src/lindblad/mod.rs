//! Lindblad master equation: generator, right-hand side and time evolution.
//!
//! A channel `(L, Γ)` contributes `(Γ/2)(2LρL† − ρL†L − L†Lρ)`. The
//! incoherent drive of rate `δn` on mode `a` contributes
//! `δn([[a,ρ],a†] + [[a†,ρ],a])`, which is the same as the two channels
//! `(a, 2δn)` and `(a†, 2δn)`.
//!
//! Time evolution is classical fixed-step RK4. Because the generator is
//! linear and time independent, `n` RK4 steps equal the `n`-th power of the
//! one-step RK4 polynomial `P(hA)`; [`evolve`] evaluates that power by
//! repeated squaring on the entries of ρ reachable from the initial state
//! (see [`ReducedSystem`]). [`evolve_stepwise`] performs the steps one by one.

mod propagator;

pub use propagator::{PackedState, Propagator, ReducedState, ReducedSystem};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::quantum::{DensityMatrix, HilbertSpace, Operator};
use crate::scalar::Real;

/// Jump operator with its rate (rad/s).
#[derive(Clone, Debug, PartialEq)]
pub struct CollapseChannel<T> {
    pub operator: Operator<T>,
    pub rate: T,
}

impl<T: Real> CollapseChannel<T> {
    pub fn new(operator: Operator<T>, rate: T) -> Result<Self> {
        if !rate.is_finite() || rate < T::zero() {
            return Err(Error::InvalidParameter(format!("channel rate must be finite and non-negative, got {rate}")));
        }
        Ok(Self { operator, rate })
    }
}

/// Hamiltonian (as H/ħ, rad/s), collapse channels and incoherent drive.
#[derive(Clone, Debug)]
pub struct LindbladGenerator<T> {
    hamiltonian: Operator<T>,
    channels: Vec<CollapseChannel<T>>,
    incoherent_rate: T,
    incoherent_mode: Option<Operator<T>>,
    // −i·H_eff with H_eff = H − (i/2) Σ Γ L†L, including the drive channels.
    minus_i_heff: CMatrix<T>,
    jumps: Vec<(T, CMatrix<T>)>,
}

impl<T: Real> LindbladGenerator<T> {
    pub fn new(
        hamiltonian: Operator<T>,
        channels: Vec<CollapseChannel<T>>,
        incoherent_rate: T,
        incoherent_mode: Option<Operator<T>>,
    ) -> Result<Self> {
        let herm = hamiltonian.hermiticity_error().to_f64_lossy();
        if !(herm <= 1e-10 * (1.0 + hamiltonian.matrix().max_abs().to_f64_lossy())) {
            return Err(Error::InvalidParameter(format!("Hamiltonian is not Hermitian (error {herm:e})")));
        }
        if !incoherent_rate.is_finite() || incoherent_rate < T::zero() {
            return Err(Error::InvalidParameter("incoherent rate must be finite and non-negative".into()));
        }
        let space = hamiltonian.space().clone();
        for ch in &channels {
            if ch.operator.space() != &space {
                return Err(Error::SpaceMismatch);
            }
        }
        if let Some(mode) = &incoherent_mode {
            if mode.space() != &space {
                return Err(Error::SpaceMismatch);
            }
        } else if incoherent_rate > T::zero() {
            return Err(Error::InvalidParameter("incoherent drive needs a mode operator".into()));
        }

        let mut jumps: Vec<(T, CMatrix<T>)> =
            channels.iter().filter(|c| c.rate > T::zero()).map(|c| (c.rate, c.operator.matrix().clone())).collect();
        if let Some(mode) = &incoherent_mode {
            if incoherent_rate > T::zero() {
                let two = T::lit(2.0);
                jumps.push((two * incoherent_rate, mode.matrix().clone()));
                jumps.push((two * incoherent_rate, mode.matrix().adjoint()));
            }
        }

        let d = space.dim();
        let mut decay = CMatrix::zeros(d, d);
        for (rate, l) in &jumps {
            decay.axpy(Complex::new(*rate / T::lit(2.0), T::zero()), &l.adjoint().matmul(l));
        }
        // −i(H − i·decay) = −iH − decay
        let minus_i_heff = &hamiltonian.matrix().scale(Complex::new(T::zero(), -T::one())) - &decay;

        Ok(Self { hamiltonian, channels, incoherent_rate, incoherent_mode, minus_i_heff, jumps })
    }

    /// Purely Hamiltonian generator.
    pub fn unitary(hamiltonian: Operator<T>) -> Result<Self> {
        Self::new(hamiltonian, Vec::new(), T::zero(), None)
    }

    pub fn space(&self) -> &HilbertSpace {
        self.hamiltonian.space()
    }

    pub fn hamiltonian(&self) -> &Operator<T> {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[CollapseChannel<T>] {
        &self.channels
    }

    pub fn incoherent_rate(&self) -> T {
        self.incoherent_rate
    }

    pub fn incoherent_mode(&self) -> Option<&Operator<T>> {
        self.incoherent_mode.as_ref()
    }

    /// Every dissipator as `(Γ, L)`, the incoherent drive split into its two
    /// equivalent channels. Zero-rate channels are dropped.
    pub fn jump_operators(&self) -> &[(T, CMatrix<T>)] {
        &self.jumps
    }

    /// Largest absolute diagonal entry of H (rad/s).
    pub fn fastest_frequency(&self) -> T {
        self.hamiltonian.max_abs_diagonal()
    }

    /// Slowest positive dissipation rate, or `None` without dissipation.
    pub fn slowest_rate(&self) -> Option<T> {
        self.jumps.iter().map(|(r, _)| *r).filter(|&r| r > T::zero()).reduce(T::min)
    }

    pub(crate) fn minus_i_heff(&self) -> &CMatrix<T> {
        &self.minus_i_heff
    }

    /// `dρ/dt` for an arbitrary (not necessarily physical) matrix.
    pub fn apply(&self, rho: &CMatrix<T>) -> Result<CMatrix<T>> {
        let d = self.space().dim();
        if rho.rows() != d || rho.cols() != d {
            return Err(Error::SpaceMismatch);
        }
        let k = &self.minus_i_heff;
        // −iH_eff ρ + ρ(−iH_eff)†
        let left = k.matmul(rho);
        let mut out = &left + &rho.matmul(&k.adjoint());
        for (rate, l) in &self.jumps {
            let term = l.matmul(rho).matmul(&l.adjoint());
            out.axpy(Complex::new(*rate, T::zero()), &term);
        }
        Ok(out)
    }
}

/// `dρ/dt` of the master equation.
pub fn lindblad_rhs<T: Real>(gen: &LindbladGenerator<T>, rho: &DensityMatrix<T>) -> Result<CMatrix<T>> {
    if rho.space() != gen.space() {
        return Err(Error::SpaceMismatch);
    }
    gen.apply(rho.matrix())
}

/// Largest step accepted by [`evolve`]: `0.05 / max|H_ii|`.
pub fn max_step<T: Real>(gen: &LindbladGenerator<T>) -> Option<T> {
    let w = gen.fastest_frequency();
    (w > T::zero()).then(|| T::lit(0.05) / w)
}

/// `min(0.02 / max|H_ii|, 1 ns)`.
pub fn default_step<T: Real>(gen: &LindbladGenerator<T>) -> T {
    let cap = T::lit(1e-9);
    match gen.fastest_frequency() {
        w if w > T::zero() => (T::lit(0.02) / w).min(cap),
        _ => cap,
    }
}

/// Rejects steps that do not resolve the fastest Hamiltonian frequency.
pub fn validate_step<T: Real>(gen: &LindbladGenerator<T>, step: T) -> Result<()> {
    if !(step > T::zero()) || !step.is_finite() {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    if let Some(limit) = max_step(gen) {
        if step > limit * T::lit(1.0 + 1e-9) {
            return Err(Error::StepTooLarge { step: step.to_f64_lossy(), limit: limit.to_f64_lossy() });
        }
    }
    Ok(())
}

/// Number of equal steps of length at most `step` covering `duration`.
pub fn step_count<T: Real>(duration: T, step: T) -> u64 {
    let n = (duration / step).ceil().to_f64_lossy();
    (n.max(1.0)) as u64
}

/// Evolves `rho0` for `duration` seconds with RK4 steps no longer than `step`.
///
/// The step count is `ceil(duration/step)` and the actual step is
/// `duration / count`. The result is checked against the density-matrix
/// invariants; a violation is reported as [`Error::Integration`].
pub fn evolve<T: Real>(
    gen: &LindbladGenerator<T>,
    rho0: &DensityMatrix<T>,
    duration: T,
    step: T,
) -> Result<DensityMatrix<T>> {
    check_evolution_args(gen, rho0, duration, step)?;
    if duration == T::zero() {
        return Ok(rho0.clone());
    }
    let steps = step_count(duration, step);
    let h = duration / T::lit(steps as f64);
    let system = ReducedSystem::new(gen, rho0.matrix(), &[])?;
    let out = system.evolve(rho0.matrix(), h, steps)?;
    finish(gen.space(), out.into_matrix())
}

/// Same contract as [`evolve`], stepping RK4 explicitly. Only practical for
/// short evolutions; used to cross-check the propagator route.
pub fn evolve_stepwise<T: Real>(
    gen: &LindbladGenerator<T>,
    rho0: &DensityMatrix<T>,
    duration: T,
    step: T,
) -> Result<DensityMatrix<T>> {
    check_evolution_args(gen, rho0, duration, step)?;
    if duration == T::zero() {
        return Ok(rho0.clone());
    }
    let steps = step_count(duration, step);
    let h = duration / T::lit(steps as f64);
    let half = Complex::new(h / T::lit(2.0), T::zero());
    let full = Complex::new(h, T::zero());
    let sixth = Complex::new(h / T::lit(6.0), T::zero());
    let mut rho = rho0.matrix().clone();
    for _ in 0..steps {
        let k1 = gen.apply(&rho)?;
        let mut y = rho.clone();
        y.axpy(half, &k1);
        let k2 = gen.apply(&y)?;
        let mut y = rho.clone();
        y.axpy(half, &k2);
        let k3 = gen.apply(&y)?;
        let mut y = rho.clone();
        y.axpy(full, &k3);
        let k4 = gen.apply(&y)?;
        rho.axpy(sixth, &k1);
        rho.axpy(sixth * T::lit(2.0), &k2);
        rho.axpy(sixth * T::lit(2.0), &k3);
        rho.axpy(sixth, &k4);
    }
    finish(gen.space(), rho)
}

fn check_evolution_args<T: Real>(
    gen: &LindbladGenerator<T>,
    rho0: &DensityMatrix<T>,
    duration: T,
    step: T,
) -> Result<()> {
    if rho0.space() != gen.space() {
        return Err(Error::SpaceMismatch);
    }
    if !(duration >= T::zero()) || !duration.is_finite() {
        return Err(Error::InvalidParameter(format!("duration must be non-negative, got {duration}")));
    }
    validate_step(gen, step)
}

fn finish<T: Real>(space: &HilbertSpace, m: CMatrix<T>) -> Result<DensityMatrix<T>> {
    if m.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("evolved density matrix".into()));
    }
    DensityMatrix::new(space.clone(), m).map_err(|e| Error::Integration(e.to_string()))
}

/// Outcome of [`steady_state`].
#[derive(Clone, Debug)]
pub struct SteadyState<T> {
    pub state: DensityMatrix<T>,
    /// Whether the settle criterion was met before the horizon.
    pub settled: bool,
    /// Simulated time at which evolution stopped (s).
    pub elapsed: T,
    /// Max entrywise change over the last settle interval.
    pub last_change: T,
}

/// Long-time limit starting from the maximally mixed state.
pub fn steady_state<T: Real>(gen: &LindbladGenerator<T>, horizon: T, settle_tol: T) -> Result<SteadyState<T>> {
    let d = gen.space().dim();
    let mixed = CMatrix::identity(d).scale_real(T::one() / T::lit(d as f64));
    let rho0 = DensityMatrix::new(gen.space().clone(), mixed)?;
    steady_state_from(gen, &rho0, horizon, settle_tol)
}

/// Evolves in intervals of one amplitude decay time of the slowest channel
/// (`2/Γ_min`) until the entrywise change over an interval drops below
/// `settle_tol` or `horizon` is reached. Not settling is reported through
/// [`SteadyState::settled`], not as an error.
pub fn steady_state_from<T: Real>(
    gen: &LindbladGenerator<T>,
    rho0: &DensityMatrix<T>,
    horizon: T,
    settle_tol: T,
) -> Result<SteadyState<T>> {
    let slowest = gen
        .slowest_rate()
        .ok_or_else(|| Error::InvalidParameter("steady state needs at least one decay channel".into()))?;
    if !(horizon > T::zero()) || !(settle_tol > T::zero()) {
        return Err(Error::InvalidParameter("horizon and settle tolerance must be positive".into()));
    }
    if rho0.space() != gen.space() {
        return Err(Error::SpaceMismatch);
    }
    let interval = T::lit(2.0) / slowest;
    let step = default_step(gen);
    let steps = step_count(interval, step);
    let h = interval / T::lit(steps as f64);

    let system = ReducedSystem::new(gen, rho0.matrix(), &[])?;
    let chunk = system.propagator(h, steps);
    let mut state = system.pack(rho0.matrix());
    let mut current = rho0.matrix().clone();
    let mut elapsed = T::zero();
    let mut last_change = T::infinity();
    let mut settled = false;
    while elapsed < horizon {
        state = chunk.apply(&state);
        elapsed += interval;
        let next = system.unpack(&state).into_matrix();
        last_change = next.max_abs_diff(&current);
        current = next;
        if last_change < settle_tol {
            settled = true;
            break;
        }
    }
    let state = finish(gen.space(), current)?;
    Ok(SteadyState { state, settled, elapsed, last_change })
}

#[cfg(test)]
mod tests;
