//! Ramsey sequence on the `S ↔ D` qubit: π/2 pulse, interaction with the
//! cavity for time `T`, second π/2 pulse with phase φ, readout of `D`.
//!
//! Pulses are instantaneous rotations. Since the second pulse acts after the
//! interaction, one master-equation evolution serves a whole fringe: the
//! readout only needs `ρ_SS`, `ρ_DD` and the coherence `ρ_SD`, each traced
//! over the cavity.

mod fit;
mod io;
mod noise;

pub use fit::{fit_fringe, fit_fringe_with, recalculated_offset, FitOptions, FringeFit, OffsetMode};
pub use io::{read_fringe_csv, write_fringe_csv, FringeFile};
pub use noise::{point_rng, sample_projection_noise, sample_projection_noise_stream};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::lindblad::{default_step, validate_step, CollapseChannel, LindbladGenerator, ReducedSystem};
use crate::model::{build_eliminated_generator, build_generator, build_ion_drive_generator, IonCavityParams};
use crate::quantum::{atomic_operator, DensityMatrix, HilbertSpace, Level};
use crate::C64;

/// Repetitions per fringe point in the experiment.
pub const DEFAULT_TRIALS: u32 = 250;
/// Points per fringe in the experiment.
pub const DEFAULT_POINTS: usize = 51;

/// Instantaneous rotation `exp(−iθ/2 (e^{iφ}|D⟩⟨S| + e^{−iφ}|S⟩⟨D|))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseSpec {
    /// Rotation angle θ (rad).
    pub angle: f64,
    /// Laser phase φ (rad).
    pub phase: f64,
}

impl PulseSpec {
    pub fn half_pi(phase: f64) -> Self {
        Self { angle: PI / 2.0, phase }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.angle > 0.0 && self.angle <= PI) || !self.phase.is_finite() {
            return Err(Error::InvalidParameter(format!("pulse angle must lie in (0, π], got {}", self.angle)));
        }
        Ok(())
    }

    /// Elements `[[R_SS, R_SD], [R_DS, R_DD]]`.
    pub fn matrix(&self) -> [[C64; 2]; 2] {
        let (c, s) = ((self.angle / 2.0).cos(), (self.angle / 2.0).sin());
        let minus_i_s = C64::new(0.0, -s);
        [
            [C64::new(c, 0.0), minus_i_s * C64::from_polar(1.0, -self.phase)],
            [minus_i_s * C64::from_polar(1.0, self.phase), C64::new(c, 0.0)],
        ]
    }
}

/// How finite qubit coherence enters the fringe.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CoherenceMode {
    /// `p ↦ B0·(1 + c_v(2p − 1))`.
    #[default]
    Affine,
    /// Dephasing channel on `D` of rate `−2 ln(c_v)/T`, then `p ↦ 2·B0·p`.
    Dephasing,
}

/// Calibrated readout offset and vacuum contrast.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherenceModel {
    /// Maximum fringe offset.
    pub b0: f64,
    /// Fringe contrast without photons.
    pub contrast_at_vacuum: f64,
    pub mode: CoherenceMode,
}

impl Default for CoherenceModel {
    fn default() -> Self {
        Self { b0: 0.4915, contrast_at_vacuum: 0.99, mode: CoherenceMode::Affine }
    }
}

impl CoherenceModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.b0 > 0.0 && self.b0 <= 0.5) {
            return Err(Error::InvalidParameter(format!("offset B0 must lie in (0, 0.5], got {}", self.b0)));
        }
        if !(self.contrast_at_vacuum > 0.0 && self.contrast_at_vacuum <= 1.0) {
            return Err(Error::InvalidParameter("vacuum contrast must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Maps an ideal `D` population to the measured excitation probability.
    pub fn map(&self, p_ideal: f64) -> f64 {
        let p = match self.mode {
            CoherenceMode::Affine => self.b0 * (1.0 + self.contrast_at_vacuum * (2.0 * p_ideal - 1.0)),
            CoherenceMode::Dephasing => 2.0 * self.b0 * p_ideal,
        };
        p.clamp(0.0, 1.0)
    }

    /// Rate of the `σ_DD` dephasing channel used in [`CoherenceMode::Dephasing`].
    pub fn dephasing_rate(&self, interaction_time: f64) -> f64 {
        if interaction_time > 0.0 {
            -2.0 * self.contrast_at_vacuum.ln() / interaction_time
        } else {
            0.0
        }
    }
}

/// Which master equation describes the interaction period.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Backend {
    /// Full four-level atom coupled to the cavity.
    #[default]
    Full,
    /// Excited state adiabatically eliminated; much faster, valid for Δ ≫ g√n.
    Eliminated,
}

/// Options of the Ramsey simulation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RamseyOptions {
    pub backend: Backend,
    pub coherence: CoherenceModel,
    /// RK4 step bound; defaults to [`default_step`].
    pub step: Option<f64>,
}

impl RamseyOptions {
    pub fn with_backend(backend: Backend) -> Self {
        Self { backend, ..Self::default() }
    }
}

/// Qubit part of the state after the interaction period, traced over the cavity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Readout {
    pub rho_ss: f64,
    pub rho_dd: f64,
    /// `⟨S|ρ|D⟩`.
    pub rho_sd: C64,
    pub rho_pp: f64,
    pub rho_dark: f64,
}

impl Readout {
    /// `D` population after the second pulse, before the coherence map.
    pub fn ideal_excitation(&self, pulse: &PulseSpec) -> f64 {
        let r = pulse.matrix();
        let (r_ds, r_dd) = (r[1][0], r[1][1]);
        let p =
            r_ds.norm_sqr() * self.rho_ss + r_dd.norm_sqr() * self.rho_dd + 2.0 * (r_ds * self.rho_sd * r_dd.conj()).re;
        p.clamp(0.0, 1.0)
    }

    /// Measured excitation for a second π/2 pulse of phase `phi` (rad).
    pub fn excitation(&self, phi: f64, coh: &CoherenceModel) -> f64 {
        coh.map(self.ideal_excitation(&PulseSpec::half_pi(phi)))
    }

    /// Qubit populations and coherence from a full atom ⊗ cavity state.
    pub fn from_state(state: &CMatrix<f64>, space: &HilbertSpace) -> Self {
        let nc = space.dims()[1];
        let block = |a: usize, b: usize| -> C64 { (0..nc).map(|n| state[(a * nc + n, b * nc + n)]).sum() };
        let (s, d, p, x) = (Level::S.slot(), Level::D.slot(), Level::P.slot(), Level::SPrime.slot());
        Self {
            rho_ss: block(s, s).re,
            rho_dd: block(d, d).re,
            rho_sd: block(s, d),
            rho_pp: block(p, p).re,
            rho_dark: block(x, x).re,
        }
    }

    pub fn trace(&self) -> f64 {
        self.rho_ss + self.rho_dd + self.rho_pp + self.rho_dark
    }
}

/// `|S⟩` after the first π/2 pulse, cavity in vacuum.
pub fn initial_state(space: &HilbertSpace) -> Result<DensityMatrix<f64>> {
    let nc = space.dims()[1];
    let mut psi = vec![C64::new(0.0, 0.0); space.dim()];
    let r = PulseSpec::half_pi(0.0).matrix();
    psi[Level::S.slot() * nc] = r[0][0];
    psi[Level::D.slot() * nc] = r[1][0];
    DensityMatrix::pure(space.clone(), &psi)
}

/// Master equation of the interaction period for the chosen backend and
/// coherence mode.
pub fn interaction_generator(p: &IonCavityParams, opts: &RamseyOptions) -> Result<LindbladGenerator<f64>> {
    let gen = match opts.backend {
        Backend::Full => build_generator(p)?,
        Backend::Eliminated => build_eliminated_generator(p)?,
    };
    with_coherence(gen, p, &opts.coherence)
}

fn with_coherence(
    gen: LindbladGenerator<f64>,
    p: &IonCavityParams,
    coh: &CoherenceModel,
) -> Result<LindbladGenerator<f64>> {
    coh.validate()?;
    if coh.mode != CoherenceMode::Dephasing {
        return Ok(gen);
    }
    let (d, _) = p.transition.levels();
    let mut channels = gen.channels().to_vec();
    let op = atomic_operator(gen.space(), d, d)?;
    channels.push(CollapseChannel::new(op, coh.dephasing_rate(p.interaction_time))?);
    LindbladGenerator::new(gen.hamiltonian().clone(), channels, gen.incoherent_rate(), gen.incoherent_mode().cloned())
}

/// Power-of-two step count with `T / 2^k` not exceeding the step bound.
fn steps_for(gen: &LindbladGenerator<f64>, duration: f64, step: Option<f64>) -> Result<(f64, u64)> {
    let bound = match step {
        Some(s) => {
            validate_step(gen, s)?;
            s
        }
        None => default_step(gen),
    };
    let mut steps: u64 = 1;
    while duration / (steps as f64) > bound {
        steps *= 2;
    }
    Ok((duration / steps as f64, steps))
}

fn block_entries(nc: usize, slot: usize) -> Vec<usize> {
    let d = 4 * nc;
    (0..nc).flat_map(|i| (0..nc).map(move |j| (slot * nc + i) * d + slot * nc + j)).collect()
}

/// Evolves through the interaction period tracking only what the readout needs.
pub fn readout(p: &IonCavityParams, opts: &RamseyOptions) -> Result<Readout> {
    let gen = interaction_generator(p, opts)?;
    readout_with(&gen, p.interaction_time, opts.step)
}

/// Same as [`readout`] for an arbitrary generator on `atom ⊗ cavity`.
pub fn readout_with(gen: &LindbladGenerator<f64>, duration: f64, step: Option<f64>) -> Result<Readout> {
    let space = gen.space().clone();
    let rho0 = initial_state(&space)?;
    if duration == 0.0 {
        return Ok(Readout::from_state(rho0.matrix(), &space));
    }
    let nc = space.dims()[1];
    let sinks = vec![block_entries(nc, Level::S.slot()), block_entries(nc, Level::SPrime.slot())];
    let system = ReducedSystem::new(gen, rho0.matrix(), &sinks)?;
    let (h, steps) = steps_for(gen, duration, step)?;
    let out = system.evolve(rho0.matrix(), h, steps)?;
    let mut r = Readout::from_state(out.matrix(), &space);
    r.rho_ss = out.sink_trace(0);
    r.rho_dark = out.sink_trace(1);
    check_readout(&r)?;
    Ok(r)
}

fn check_readout(r: &Readout) -> Result<()> {
    let trace_err = (r.trace() - 1.0).abs();
    if trace_err > 1e-8 {
        return Err(Error::Integration(format!("qubit trace drifted by {trace_err:e}")));
    }
    let floor = -1e-8;
    if r.rho_ss < floor || r.rho_dd < floor || r.rho_pp < floor || r.rho_dark < floor {
        return Err(Error::Integration("negative population after the interaction".into()));
    }
    if r.rho_sd.norm_sqr() > r.rho_ss.max(0.0) * r.rho_dd.max(0.0) + 1e-8 {
        return Err(Error::Integration("qubit coherence exceeds the population bound".into()));
    }
    Ok(())
}

/// Full atom ⊗ cavity state at the end of the interaction period.
pub fn interaction_state(p: &IonCavityParams, opts: &RamseyOptions) -> Result<DensityMatrix<f64>> {
    let gen = interaction_generator(p, opts)?;
    let space = gen.space().clone();
    let rho0 = initial_state(&space)?;
    if p.interaction_time == 0.0 {
        return Ok(rho0);
    }
    let system = ReducedSystem::new(&gen, rho0.matrix(), &[])?;
    let (h, steps) = steps_for(&gen, p.interaction_time, opts.step)?;
    let out = system.evolve(rho0.matrix(), h, steps)?;
    DensityMatrix::new(space, out.into_matrix()).map_err(|e| Error::Integration(e.to_string()))
}

/// Measured fringe: phases in units of π, excitation probabilities and the
/// number of repetitions per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Fringe {
    phases: Vec<f64>,
    p_d: Vec<f64>,
    trials: u32,
}

impl Fringe {
    pub fn new(phases: Vec<f64>, p_d: Vec<f64>, trials: u32) -> Result<Self> {
        if phases.len() != p_d.len() {
            return Err(Error::InvalidParameter(format!("{} phases but {} probabilities", phases.len(), p_d.len())));
        }
        if phases.len() < 4 {
            return Err(Error::InvalidParameter("a fringe needs at least 4 points".into()));
        }
        if trials < 1 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if phases.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        if let Some(f) = p_d.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::InvalidParameter(format!("probability {f} outside [0, 1]")));
        }
        Ok(Self { phases, p_d, trials })
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn p_d(&self) -> &[f64] {
        &self.p_d
    }

    pub fn trials(&self) -> u32 {
        self.trials
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn with_trials(&self, trials: u32) -> Result<Self> {
        Self::new(self.phases.clone(), self.p_d.clone(), trials)
    }
}

/// `n` equally spaced phases covering one period `[0, 2)` in units of π.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * k as f64 / n as f64).collect()
}

/// Excitation probability for one second-pulse phase `phi` (rad), full model.
pub fn simulate_point(p: &IonCavityParams, phi: f64, coh: &CoherenceModel) -> Result<f64> {
    let opts = RamseyOptions { coherence: *coh, ..RamseyOptions::default() };
    Ok(readout(p, &opts)?.excitation(phi, coh))
}

/// Noiseless fringe at the given phases (units of π), full model.
pub fn simulate_fringe(p: &IonCavityParams, phases: &[f64], coh: &CoherenceModel) -> Result<Fringe> {
    let opts = RamseyOptions { coherence: *coh, ..RamseyOptions::default() };
    simulate_fringe_with(p, phases, &opts)
}

pub fn simulate_fringe_with(p: &IonCavityParams, phases: &[f64], opts: &RamseyOptions) -> Result<Fringe> {
    let r = readout(p, opts)?;
    fringe_from_readout(&r, phases, &opts.coherence)
}

pub fn fringe_from_readout(r: &Readout, phases: &[f64], coh: &CoherenceModel) -> Result<Fringe> {
    let p_d = phases.iter().map(|&x| r.excitation(PI * x, coh)).collect();
    Fringe::new(phases.to_vec(), p_d, DEFAULT_TRIALS)
}

/// Fringe with the cavity replaced by a classical drive of Rabi frequency
/// `rabi` on the ion.
pub fn simulate_ion_drive_fringe(
    p: &IonCavityParams,
    rabi: f64,
    phases: &[f64],
    opts: &RamseyOptions,
) -> Result<Fringe> {
    let gen = with_coherence(build_ion_drive_generator(p, rabi)?, p, &opts.coherence)?;
    let r = readout_with(&gen, p.interaction_time, opts.step)?;
    fringe_from_readout(&r, phases, &opts.coherence)
}

#[cfg(test)]
mod tests;
