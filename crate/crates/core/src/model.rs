//! The ion–cavity system: parameters, Hamiltonian and decay channels.
//!
//! The atom is reduced to four states `{S, D, P, S′}` (or `{S, D′, P′, S′}`
//! for the second qubit transition). The cavity couples `D ↔ P` far off
//! resonance, so each photon shifts `D` down by `g²/Δ` and Ramsey fringes on
//! `S ↔ D` pick up a photon-number-dependent phase.
//!
//! Conventions: every rate and detuning is an angular frequency (rad/s).
//! `kappa` is the cavity *field* decay rate, so the cavity channel is
//! `(a, 2κ)` and an empty cavity driven with amplitude `η` holds
//! `(η/κ)²` photons; the incoherent drive `δn` adds `δn/κ` thermal photons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{CollapseChannel, LindbladGenerator};
use crate::quantum::{atomic_operator, embed, fock_annihilation, HilbertSpace, Level, Operator};
use crate::{mhz, TWO_PI};

/// Which qubit transition the cavity couples to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    /// `D ↔ P`.
    #[default]
    #[serde(rename = "DP")]
    Dp,
    /// `D′ ↔ P′`.
    #[serde(rename = "DpPp", alias = "D'P'")]
    DpPp,
}

impl Transition {
    pub fn levels(self) -> (Level, Level) {
        match self {
            Transition::Dp => (Level::D, Level::P),
            Transition::DpPp => (Level::DPrime, Level::PPrime),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Transition::Dp => "DP",
            Transition::DpPp => "DpPp",
        }
    }
}

/// Effective decay rates out of the excited state, after Zeeman branching.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchingTable {
    pub to_s: f64,
    pub to_s_prime: f64,
    pub to_d: f64,
}

impl BranchingTable {
    pub fn total(&self) -> f64 {
        self.to_s + self.to_s_prime + self.to_d
    }
}

/// Full parameter record of the ion–cavity model.
#[derive(Clone, Debug, PartialEq)]
pub struct IonCavityParams {
    pub g: f64,
    pub kappa: f64,
    /// Drive-to-atom detuning Δ.
    pub delta_pl: f64,
    /// Drive-to-cavity detuning.
    pub delta_cl: f64,
    /// Ramsey-laser detuning.
    pub delta_dr: f64,
    /// Frame offset of the dark state.
    pub delta_ssp: f64,
    pub eta: f64,
    pub delta_n: f64,
    pub gamma_ps: f64,
    pub gamma_pd: f64,
    pub gamma_pd32: f64,
    pub transition: Transition,
    pub n_max: usize,
    /// Interaction time between the two Ramsey pulses (s).
    pub interaction_time: f64,
}

impl Default for IonCavityParams {
    /// ⁴⁰Ca⁺ in the fiber cavity, undriven, `D ↔ P` transition.
    fn default() -> Self {
        Self {
            g: mhz(0.968),
            kappa: mhz(0.068),
            delta_pl: mhz(125.0),
            delta_cl: 0.0,
            delta_dr: 0.0,
            delta_ssp: 0.0,
            eta: 0.0,
            delta_n: 0.0,
            gamma_ps: mhz(21.4),
            gamma_pd: mhz(1.34),
            gamma_pd32: mhz(0.152),
            transition: Transition::Dp,
            n_max: 9,
            interaction_time: 50e-6,
        }
    }
}

/// Coupling of the second transition relative to the first.
pub const SECOND_TRANSITION_COUPLING: f64 = 0.82;

impl IonCavityParams {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("g", self.g),
            ("kappa", self.kappa),
            ("eta", self.eta),
            ("delta_n", self.delta_n),
            ("gamma_ps", self.gamma_ps),
            ("gamma_pd", self.gamma_pd),
            ("gamma_pd32", self.gamma_pd32),
        ];
        for (name, v) in rates {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        for (name, v) in [
            ("delta_pl", self.delta_pl),
            ("delta_cl", self.delta_cl),
            ("delta_dr", self.delta_dr),
            ("delta_ssp", self.delta_ssp),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        if !(self.interaction_time.is_finite() && self.interaction_time >= 0.0) {
            return Err(Error::InvalidParameter("interaction time must be non-negative".into()));
        }
        Ok(())
    }

    /// Same system on the second transition with `g′ = 0.82 g`.
    pub fn second_transition(&self) -> Self {
        Self { g: self.g * SECOND_TRANSITION_COUPLING, transition: Transition::DpPp, ..self.clone() }
    }

    pub fn with_drive(&self, drive: Drive) -> Self {
        Self { eta: drive.eta, delta_n: drive.delta_n, ..self.clone() }
    }

    pub fn drive(&self) -> Drive {
        Drive { eta: self.eta, delta_n: self.delta_n }
    }

    /// Sets `Δ_CL = −⟨n⟩g²/Δ`, keeping the drive resonant with the
    /// ion-shifted cavity.
    pub fn with_self_consistent_detuning(&self, mean_n: f64) -> Result<Self> {
        let shift = dispersive_shift(self.g, self.delta_pl)?;
        Ok(Self { delta_cl: -mean_n * shift, ..self.clone() })
    }

    pub fn branching(&self) -> BranchingTable {
        match self.transition {
            Transition::Dp => BranchingTable {
                to_s: 2.0 / 3.0 * self.gamma_ps,
                to_s_prime: self.gamma_ps / 3.0 + 0.6 * self.gamma_pd + self.gamma_pd32,
                to_d: 0.4 * self.gamma_pd,
            },
            Transition::DpPp => BranchingTable {
                to_s: self.gamma_ps,
                to_s_prime: 11.0 / 15.0 * self.gamma_pd,
                to_d: 4.0 / 15.0 * self.gamma_pd,
            },
        }
    }

    /// Half of the total excited-state decay rate (the amplitude decay rate γ).
    pub fn atomic_half_width(&self) -> f64 {
        0.5 * (self.gamma_ps + self.gamma_pd + self.gamma_pd32)
    }

    pub fn space(&self) -> HilbertSpace {
        HilbertSpace::atom_cavity(self.n_max)
    }

    /// Coherent photons of the empty cavity, `(η/κ)²`.
    pub fn n_coh(&self) -> f64 {
        self.drive().n_coh(self.kappa)
    }

    /// Thermal photons of the empty cavity, `δn/κ`.
    pub fn n_th(&self) -> f64 {
        self.drive().n_th(self.kappa)
    }
}

/// Cavity drive: coherent amplitude η and incoherent rate δn (rad/s).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub eta: f64,
    pub delta_n: f64,
}

impl Drive {
    pub fn new(eta: f64, delta_n: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0 && delta_n.is_finite() && delta_n >= 0.0) {
            return Err(Error::InvalidParameter(format!("drive must be non-negative, got η={eta}, δn={delta_n}")));
        }
        Ok(Self { eta, delta_n })
    }

    /// Drive producing `n_coh` coherent and `n_th` thermal photons in the
    /// empty cavity.
    pub fn from_photons(n_coh: f64, n_th: f64, kappa: f64) -> Result<Self> {
        if !(n_coh >= 0.0 && n_th >= 0.0) {
            return Err(Error::InvalidParameter("photon numbers must be non-negative".into()));
        }
        Self::new(kappa * n_coh.sqrt(), kappa * n_th)
    }

    /// Splits a target mean photon number into coherent and thermal parts.
    pub fn from_mean(mean_n: f64, thermal_fraction: f64, kappa: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&thermal_fraction) {
            return Err(Error::InvalidParameter("thermal fraction must lie in [0, 1]".into()));
        }
        Self::from_photons(mean_n * (1.0 - thermal_fraction), mean_n * thermal_fraction, kappa)
    }

    pub fn n_coh(&self, kappa: f64) -> f64 {
        (self.eta / kappa).powi(2)
    }

    pub fn n_th(&self, kappa: f64) -> f64 {
        self.delta_n / kappa
    }

    pub fn mean_n(&self, kappa: f64) -> f64 {
        self.n_coh(kappa) + self.n_th(kappa)
    }
}

/// Cavity operators embedded in the atom–cavity space.
struct Ops {
    space: HilbertSpace,
    a: Operator<f64>,
}

impl Ops {
    fn new(p: &IonCavityParams) -> Result<Self> {
        let space = p.space();
        let a = embed(&space, &fock_annihilation(p.n_max)?, 1)?;
        Ok(Self { space, a })
    }

    fn sigma(&self, from: Level, to: Level) -> Operator<f64> {
        atomic_operator(&self.space, from, to).expect("four-level atomic factor")
    }

    fn number(&self) -> Operator<f64> {
        self.a.adjoint().mul(&self.a).expect("same space")
    }

    fn quadrature(&self) -> Operator<f64> {
        self.a.add(&self.a.adjoint()).expect("same space")
    }
}

/// `H/ħ = Δ_DR σ_D + (Δ_PL + Δ_CL + Δ_DR) σ_P + Δ_SS′ σ_S′ + Δ_CL a†a
///        + g(σ_PD a + σ_DP a†) + η(a + a†)`, with `σ_PD = |P⟩⟨D|`.
pub fn build_hamiltonian(p: &IonCavityParams) -> Result<Operator<f64>> {
    p.validate()?;
    let ops = Ops::new(p)?;
    let (d, e) = p.transition.levels();
    let mut h = Operator::zero(&ops.space);
    h.add_scaled(p.delta_dr, &ops.sigma(d, d))?;
    h.add_scaled(p.delta_pl + p.delta_cl + p.delta_dr, &ops.sigma(e, e))?;
    h.add_scaled(p.delta_ssp, &ops.sigma(Level::SPrime, Level::SPrime))?;
    h.add_scaled(p.delta_cl, &ops.number())?;
    let up = ops.sigma(d, e).mul(&ops.a)?;
    h.add_scaled(p.g, &up)?;
    h.add_scaled(p.g, &up.adjoint())?;
    h.add_scaled(p.eta, &ops.quadrature())?;
    Ok(h)
}

/// Spontaneous decay of the excited state into `S`, `S′` and `D` with the
/// branching rates, plus cavity field decay `(a, 2κ)`.
pub fn build_channels(p: &IonCavityParams) -> Result<Vec<CollapseChannel<f64>>> {
    p.validate()?;
    let ops = Ops::new(p)?;
    let (d, e) = p.transition.levels();
    let b = p.branching();
    Ok(vec![
        CollapseChannel::new(ops.sigma(e, Level::S), b.to_s)?,
        CollapseChannel::new(ops.sigma(e, Level::SPrime), b.to_s_prime)?,
        CollapseChannel::new(ops.sigma(e, d), b.to_d)?,
        CollapseChannel::new(ops.a.clone(), 2.0 * p.kappa)?,
    ])
}

/// Full master equation including the incoherent drive on the cavity mode.
pub fn build_generator(p: &IonCavityParams) -> Result<LindbladGenerator<f64>> {
    let h = build_hamiltonian(p)?;
    let channels = build_channels(p)?;
    let a = Ops::new(p)?.a;
    LindbladGenerator::new(h, channels, p.delta_n, Some(a))
}

/// Master equation with the excited state adiabatically eliminated.
///
/// The excited state stays in the basis but is decoupled. `D` with `n`
/// photons is shifted by `−χn`, `χ = g²Δ/(Δ² + Γ²/4)`, and scatters a cavity
/// photon into `S`, `S′` or back into `D` at rates `Γ_x g²/(Δ² + Γ²/4)` per
/// photon, `Γ` being the total excited-state decay rate.
pub fn build_eliminated_generator(p: &IonCavityParams) -> Result<LindbladGenerator<f64>> {
    p.validate()?;
    let ops = Ops::new(p)?;
    let (d, _) = p.transition.levels();
    let b = p.branching();
    let denom = p.delta_pl.powi(2) + 0.25 * b.total().powi(2);
    if denom == 0.0 {
        return Err(Error::InvalidParameter("elimination needs a detuned or decaying excited state".into()));
    }
    let chi = p.g * p.g * p.delta_pl / denom;
    let per_photon = p.g * p.g / denom;

    let sd = ops.sigma(d, d);
    let mut h = Operator::zero(&ops.space);
    h.add_scaled(p.delta_dr, &sd)?;
    h.add_scaled(p.delta_ssp, &ops.sigma(Level::SPrime, Level::SPrime))?;
    h.add_scaled(p.delta_cl, &ops.number())?;
    h.add_scaled(-chi, &sd.mul(&ops.number())?)?;
    h.add_scaled(p.eta, &ops.quadrature())?;

    let scatter = |to: Level| ops.sigma(d, to).mul(&ops.a);
    let channels = vec![
        CollapseChannel::new(scatter(Level::S)?, b.to_s * per_photon)?,
        CollapseChannel::new(scatter(Level::SPrime)?, b.to_s_prime * per_photon)?,
        CollapseChannel::new(scatter(d)?, b.to_d * per_photon)?,
        CollapseChannel::new(ops.a.clone(), 2.0 * p.kappa)?,
    ];
    LindbladGenerator::new(h, channels, p.delta_n, Some(ops.a))
}

/// Ion driven directly by a classical field of Rabi frequency `rabi` on the
/// same transition, cavity removed (cavity factor of dimension 1).
pub fn build_ion_drive_generator(p: &IonCavityParams, rabi: f64) -> Result<LindbladGenerator<f64>> {
    p.validate()?;
    if !(rabi.is_finite() && rabi >= 0.0) {
        return Err(Error::InvalidParameter("Rabi frequency must be non-negative".into()));
    }
    let space = HilbertSpace::new(vec![crate::quantum::ATOM_LEVELS, 1])?;
    let sigma = |from, to| atomic_operator::<f64>(&space, from, to);
    let (d, e) = p.transition.levels();
    let mut h = Operator::zero(&space);
    h.add_scaled(p.delta_dr, &sigma(d, d)?)?;
    h.add_scaled(p.delta_pl + p.delta_dr, &sigma(e, e)?)?;
    h.add_scaled(p.delta_ssp, &sigma(Level::SPrime, Level::SPrime)?)?;
    h.add_scaled(rabi, &sigma(d, e)?)?;
    h.add_scaled(rabi, &sigma(e, d)?)?;
    let b = p.branching();
    let channels = vec![
        CollapseChannel::new(sigma(e, Level::S)?, b.to_s)?,
        CollapseChannel::new(sigma(e, Level::SPrime)?, b.to_s_prime)?,
        CollapseChannel::new(sigma(e, d)?, b.to_d)?,
    ];
    LindbladGenerator::new(h, channels, 0.0, None)
}

/// Cavity frequency shift per ion, `g²/Δ` (rad/s).
pub fn dispersive_shift(g: f64, delta: f64) -> Result<f64> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::InvalidParameter("dispersive shift needs a finite nonzero detuning".into()));
    }
    Ok(g * g / delta)
}

/// Idealized Ramsey phase `T·(g²/Δ)·⟨n⟩` in radians (no build-up transient).
pub fn expected_phase_shift(mean_n: f64, p: &IonCavityParams) -> Result<f64> {
    if !(mean_n >= 0.0) {
        return Err(Error::InvalidParameter("mean photon number must be non-negative".into()));
    }
    p.validate()?;
    Ok(p.interaction_time * dispersive_shift(p.g, p.delta_pl)? * mean_n)
}

/// Mean of the intensity build-up `(1 − e^{−κt})²` over the interaction
/// time, the fraction of the steady-state phase accumulated when the field
/// starts from vacuum. Close to `1 − 3/(2κT)` for `κT ≫ 1`.
pub fn build_up_factor(p: &IonCavityParams) -> f64 {
    let kt = p.kappa * p.interaction_time;
    if kt <= 0.0 {
        return 0.0;
    }
    let e1 = (-kt).exp();
    let e2 = (-2.0 * kt).exp();
    1.0 - 2.0 * (1.0 - e1) / kt + (1.0 - e2) / (2.0 * kt)
}

/// `g²/(κΔ)`: below 1 the cavity resolves no qubit-state-dependent pull.
pub fn pull_ratio(p: &IonCavityParams) -> Result<f64> {
    Ok(dispersive_shift(p.g, p.delta_pl)? / p.kappa)
}

/// Angular frequency (rad/s) to ordinary frequency in MHz.
pub fn to_mhz(omega: f64) -> f64 {
    omega / TWO_PI / 1e6
}
