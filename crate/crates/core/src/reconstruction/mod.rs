//! Maximum-likelihood estimation of the cavity drive `(η, δn)` from a Ramsey
//! fringe, and the photon statistics it implies.

mod distribution;
mod uncertainty;

pub use distribution::{mandel_q, sso, PhotonDistribution, TAIL_LIMIT};
pub use uncertainty::{monte_carlo_uncertainty, phase_resolution, MonteCarloOptions, PhaseResolution, Uncertainty};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_up_factor, expected_phase_shift, Drive, IonCavityParams};
use crate::optimize::{nelder_mead, Minimum, NelderMeadOptions};
use crate::ramsey::{
    fit_fringe_with, fringe_from_readout, interaction_state, readout, Backend, CoherenceModel, FitOptions, Fringe,
    RamseyOptions, Readout,
};

/// Probabilities are kept this far from 0 and 1 before taking logs.
pub const PROBABILITY_CLAMP: f64 = 1e-12;

/// Lower bound on `η/κ` and `δn/κ` during the search.
pub const DRIVE_FLOOR: f64 = 1e-6;

/// `Σ f log P + (1 − f) log(1 − P)` over fringe points.
pub fn fringe_log_likelihood(observed: &[f64], model: &[f64]) -> Result<f64> {
    if observed.len() != model.len() {
        return Err(Error::InvalidParameter("observed and model fringes differ in length".into()));
    }
    let ll: f64 = observed
        .iter()
        .zip(model)
        .map(|(&f, &p)| {
            let p = p.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
            f * p.ln() + (1.0 - f) * (1.0 - p).ln()
        })
        .sum();
    if !ll.is_finite() {
        return Err(Error::NonFinite("log-likelihood".into()));
    }
    Ok(ll)
}

/// Log-likelihood of `fringe` under the full model driven by `drive`.
pub fn log_likelihood(fringe: &Fringe, drive: Drive, p: &IonCavityParams, coh: &CoherenceModel) -> Result<f64> {
    let opts = RamseyOptions { coherence: *coh, ..RamseyOptions::default() };
    log_likelihood_with(fringe, drive, 0.0, p, &opts)
}

/// Log-likelihood with the model fringe shifted by `phase_offset` (units of π).
pub fn log_likelihood_with(
    fringe: &Fringe,
    drive: Drive,
    phase_offset: f64,
    p: &IonCavityParams,
    opts: &RamseyOptions,
) -> Result<f64> {
    let r = readout(&p.with_drive(drive), opts)?;
    fringe_log_likelihood(fringe.p_d(), &model_fringe(&r, fringe.phases(), phase_offset, &opts.coherence)?)
}

fn model_fringe(r: &Readout, phases: &[f64], phase_offset: f64, coh: &CoherenceModel) -> Result<Vec<f64>> {
    let shifted: Vec<f64> = phases.iter().map(|x| x - phase_offset).collect();
    Ok(fringe_from_readout(r, &shifted, coh)?.p_d().to_vec())
}

/// Static phase offset between model and data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhaseOffset {
    /// Known offset, units of π.
    Fixed(f64),
    /// Fitted together with the drive.
    Fitted,
}

impl Default for PhaseOffset {
    fn default() -> Self {
        Self::Fixed(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructOptions {
    pub ramsey: RamseyOptions,
    pub phase_offset: PhaseOffset,
    pub simplex: NelderMeadOptions,
    /// Initial simplex size in the log coordinates.
    pub initial_step: f64,
    /// Independent searches when no starting drive is given.
    pub starts: usize,
    /// Fresh simplices started from the optimum to guard against collapse.
    pub restarts: usize,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            ramsey: RamseyOptions::default(),
            phase_offset: PhaseOffset::default(),
            simplex: NelderMeadOptions::default(),
            initial_step: 0.5,
            starts: 4,
            restarts: 2,
        }
    }
}

impl ReconstructOptions {
    pub fn with_backend(backend: Backend) -> Self {
        Self { ramsey: RamseyOptions { backend, ..RamseyOptions::default() }, ..Self::default() }
    }

    pub fn with_coherence(mut self, coh: CoherenceModel) -> Self {
        self.ramsey.coherence = coh;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionResult {
    pub drive: Drive,
    /// Cavity photon statistics after the interaction at the optimum.
    pub distribution: PhotonDistribution,
    pub n_coh: f64,
    pub n_th: f64,
    /// Units of π.
    pub phase_offset: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub seed: Option<u64>,
    pub uncertainty: Option<Uncertainty>,
}

impl ReconstructionResult {
    pub fn mean_n(&self) -> f64 {
        self.distribution.mean()
    }

    pub fn mandel_q(&self) -> Option<f64> {
        mandel_q(&self.distribution)
    }

    pub fn to_record(&self) -> ResultRecord {
        ResultRecord {
            eta_rad_s: self.drive.eta,
            delta_n_rad_s: self.drive.delta_n,
            n_coh: self.n_coh,
            n_th: self.n_th,
            p_n: self.distribution.probabilities().to_vec(),
            mean_n: self.mean_n(),
            mandel_q: self.mandel_q(),
            log_likelihood: self.log_likelihood,
            seed: self.seed,
            iterations: self.iterations,
            converged: self.converged,
            uncertainty: self.uncertainty.clone(),
        }
    }
}

/// Serialized form of a [`ReconstructionResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub eta_rad_s: f64,
    pub delta_n_rad_s: f64,
    pub n_coh: f64,
    pub n_th: f64,
    pub p_n: Vec<f64>,
    pub mean_n: f64,
    pub mandel_q: Option<f64>,
    pub log_likelihood: f64,
    pub seed: Option<u64>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub uncertainty: Option<Uncertainty>,
}

const THERMAL_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Starting drive from the fringe fit: the shift gives `⟨n⟩`, the contrast
/// the thermal share by comparison with simulated contrasts at that `⟨n⟩`.
pub fn initial_guess(fringe: &Fringe, p: &IonCavityParams, opts: &ReconstructOptions) -> Result<Drive> {
    let (mean, frac) = mean_and_fraction(fringe, p, opts)?;
    Drive::from_mean(mean, frac, p.kappa)
}

/// [`initial_guess`] followed by drives of the same `⟨n⟩` with other thermal
/// shares, `count` in total. Nearly degenerate optima of the likelihood lie
/// along this line.
pub fn starting_drives(
    fringe: &Fringe,
    p: &IonCavityParams,
    opts: &ReconstructOptions,
    count: usize,
) -> Result<Vec<Drive>> {
    let (mean, frac) = mean_and_fraction(fringe, p, opts)?;
    let spread = count.saturating_sub(1);
    let mut fracs = vec![frac];
    fracs.extend((0..spread).map(|k| (k as f64 + 0.5) / spread as f64));
    fracs.iter().map(|&f| Drive::from_mean(mean, f.clamp(0.02, 0.98), p.kappa)).collect()
}

fn mean_and_fraction(fringe: &Fringe, p: &IonCavityParams, opts: &ReconstructOptions) -> Result<(f64, f64)> {
    let offset = match opts.phase_offset {
        PhaseOffset::Fixed(o) => o,
        PhaseOffset::Fitted => 0.0,
    };
    let fit = fit_fringe_with(fringe, &FitOptions::free(0.5 + offset))?;
    let per_photon = expected_phase_shift(1.0, p)? / PI * build_up_factor(p);
    let mean = ((fit.phase_shift - offset) / per_photon).clamp(0.02, p.n_max as f64 / 3.0);
    let kappa = p.kappa;
    if mean < 0.05 {
        return Ok((mean, 0.5));
    }

    let table_opts = RamseyOptions { backend: Backend::Eliminated, ..opts.ramsey };
    let mut table = Vec::with_capacity(THERMAL_FRACTIONS.len());
    for &frac in &THERMAL_FRACTIONS {
        let drive = Drive::from_mean(mean, frac, kappa)?;
        let r = readout(&p.with_drive(drive), &table_opts)?;
        let model = fringe_from_readout(&r, fringe.phases(), &table_opts.coherence)?;
        table.push(fit_fringe_with(&model, &FitOptions::free(fit.phase_shift))?.contrast);
    }
    Ok((mean, interpolate_fraction(&table, fit.contrast).clamp(0.02, 0.98)))
}

/// Thermal fraction whose tabulated contrast matches `contrast`, by linear
/// interpolation; the nearest entry outside the table's range.
fn interpolate_fraction(table: &[f64], contrast: f64) -> f64 {
    for i in 0..table.len() - 1 {
        let (c0, c1) = (table[i], table[i + 1]);
        if (contrast - c0) * (contrast - c1) <= 0.0 && c0 != c1 {
            let (f0, f1) = (THERMAL_FRACTIONS[i], THERMAL_FRACTIONS[i + 1]);
            return f0 + (contrast - c0) * (f1 - f0) / (c1 - c0);
        }
    }
    let nearest = (0..table.len()).min_by(|&i, &j| (table[i] - contrast).abs().total_cmp(&(table[j] - contrast).abs()));
    THERMAL_FRACTIONS[nearest.unwrap_or(0)]
}

/// Maximizes the fringe likelihood over `(η, δn)` (and the phase offset when
/// fitted), searching in `ln(η/κ)`, `ln(δn/κ)`.
///
/// An exhausted iteration budget returns a result with `converged == false`.
pub fn reconstruct(
    fringe: &Fringe,
    p: &IonCavityParams,
    init: Option<Drive>,
    opts: &ReconstructOptions,
) -> Result<ReconstructionResult> {
    p.validate()?;
    let spread = fringe.p_d().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - fringe.p_d().iter().cloned().fold(f64::INFINITY, f64::min);
    if spread < 1e-9 {
        return Err(Error::Degenerate("constant fringe carries no phase information".into()));
    }
    let kappa = p.kappa;
    let starts = match init {
        Some(d) => vec![d],
        None => starting_drives(fringe, p, opts, opts.starts.max(1))?,
    };
    let floor = DRIVE_FLOOR.ln();
    let to_coord = |v: f64| (v / kappa).max(DRIVE_FLOOR).ln();

    let step = vec![opts.initial_step; 2];
    let mut simplex = opts.simplex.clone();
    simplex.lower = Some(vec![floor, floor]);

    let decode = |x: &[f64]| -> Drive {
        let value = |c: f64| if c <= floor { 0.0 } else { kappa * c.exp() };
        Drive { eta: value(x[0]), delta_n: value(x[1]) }
    };
    // The offset is profiled out: one readout per drive, then a cheap 1-D search.
    let evaluate = |drive: Drive| -> Result<(f64, f64)> {
        let r = readout(&p.with_drive(drive), &opts.ramsey)?;
        let ll_at = |o: f64| -> Result<f64> {
            fringe_log_likelihood(fringe.p_d(), &model_fringe(&r, fringe.phases(), o, &opts.ramsey.coherence)?)
        };
        match opts.phase_offset {
            PhaseOffset::Fixed(o) => Ok((o, ll_at(o)?)),
            PhaseOffset::Fitted => best_offset(ll_at),
        }
    };
    let objective = |x: &[f64]| -> Result<f64> { Ok(-evaluate(decode(x))?.1) };

    let (mut iterations, mut evaluations) = (0, 0);
    let mut best: Option<Minimum> = None;
    for start in &starts {
        let x0 = vec![to_coord(start.eta), to_coord(start.delta_n)];
        let m = nelder_mead(objective, &x0, &step, &simplex)?;
        iterations += m.iterations;
        evaluations += m.evaluations;
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least one start");
    for _ in 0..opts.restarts {
        if !best.converged {
            break;
        }
        let small: Vec<f64> = step.iter().map(|s| s * 0.2).collect();
        let again = nelder_mead(objective, &best.point, &small, &simplex)?;
        iterations += again.iterations;
        evaluations += again.evaluations;
        let gain = best.value - again.value;
        let moved = again.point.iter().zip(&best.point).any(|(a, b)| (a - b).abs() > simplex.parameter_tolerance);
        if again.value <= best.value {
            best = again;
        }
        if gain <= simplex.value_tolerance && !moved {
            break;
        }
    }

    let drive = decode(&best.point);
    let (phase_offset, _) = evaluate(drive)?;
    let state = interaction_state(&p.with_drive(drive), &opts.ramsey)?;
    let distribution = PhotonDistribution::from_state(&state)?;
    Ok(ReconstructionResult {
        drive,
        distribution,
        n_coh: drive.n_coh(kappa),
        n_th: drive.n_th(kappa),
        phase_offset,
        log_likelihood: -best.value,
        iterations,
        evaluations,
        converged: best.converged,
        seed: None,
        uncertainty: None,
    })
}

/// Maximizes `ll` over offsets in `[−1, 1)` (units of π): grid search, then
/// golden-section refinement around the best grid point.
fn best_offset<F: Fn(f64) -> Result<f64>>(ll: F) -> Result<(f64, f64)> {
    const GRID: usize = 40;
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..GRID {
        let o = -1.0 + 2.0 * k as f64 / GRID as f64;
        let v = ll(o)?;
        if v > best.1 {
            best = (o, v);
        }
    }
    let h = 2.0 / GRID as f64;
    let (mut a, mut b) = (best.0 - h, best.0 + h);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - ratio * (b - a), a + ratio * (b - a));
    let (mut fc, mut fd) = (ll(c)?, ll(d)?);
    while b - a > 1e-10 {
        if fc > fd {
            b = d;
            (d, fd) = (c, fc);
            c = b - ratio * (b - a);
            fc = ll(c)?;
        } else {
            a = c;
            (c, fc) = (d, fd);
            d = a + ratio * (b - a);
            fd = ll(d)?;
        }
    }
    let o = 0.5 * (a + b);
    let v = ll(o)?;
    Ok(if v >= best.1 { (o, v) } else { best })
}
