use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dispersive_shift, Drive, IonCavityParams};
use crate::ramsey::{
    fit_fringe_with, fringe_from_readout, interaction_state, phase_grid, readout, sample_projection_noise_stream,
    Backend, CoherenceModel, FitOptions, Fringe, RamseyOptions, DEFAULT_POINTS, DEFAULT_TRIALS,
};

use super::{
    log_likelihood_with, mandel_q, model_fringe, reconstruct, PhaseOffset, PhotonDistribution, ReconstructOptions,
    ReconstructionResult,
};

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloOptions {
    /// Repetitions per resampled point; the fringe's own count by default.
    pub trials: Option<u32>,
    /// Options of the inner reconstructions.
    pub inner: ReconstructOptions,
    /// Full-model likelihood cross-check every this many samples (0 = never).
    pub spot_check_every: usize,
    pub check_every: usize,
    pub min_samples: usize,
    pub max_samples: usize,
    /// Relative change of the running standard deviations that counts as settled.
    pub tolerance: f64,
    pub max_failure_fraction: f64,
    pub workers: usize,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        let mut inner = ReconstructOptions::with_backend(Backend::Eliminated);
        inner.restarts = 0;
        inner.initial_step = 0.2;
        Self {
            trials: None,
            inner,
            spot_check_every: 50,
            check_every: 25,
            min_samples: 100,
            max_samples: 2000,
            tolerance: 0.05,
            max_failure_fraction: 0.2,
            workers: 1,
        }
    }
}

impl MonteCarloOptions {
    pub fn with_coherence(mut self, coh: CoherenceModel) -> Self {
        self.inner.ramsey.coherence = coh;
        self
    }
}

/// Bootstrap spread of the drive and the quantities derived from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Uncertainty {
    pub eta_err: f64,
    pub delta_n_err: f64,
    pub eta_mean: f64,
    pub delta_n_mean: f64,
    /// `⟨n⟩` of the distributions at the lower and upper drive.
    pub mean_n_lower: f64,
    pub mean_n_upper: f64,
    pub mandel_q_lower: Option<f64>,
    pub mandel_q_upper: Option<f64>,
    pub samples: usize,
    pub failures: usize,
    pub converged: bool,
    /// Largest full-minus-fast log-likelihood gap at spot-checked optima.
    pub spot_check_max_gap: Option<f64>,
}

struct Sample {
    drive: Option<Drive>,
    spot_gap: Option<f64>,
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn settled(old: f64, new: f64, tol: f64) -> bool {
    if new == old {
        return true;
    }
    (new - old).abs() <= tol * new.abs().max(old.abs())
}

/// Parametric bootstrap around `result`: resample the best-fit fringe with
/// binomial projection noise, reconstruct each draw, and stop once the
/// standard deviations of `η` and `δn` stop changing.
///
/// Draw `i` uses the noise stream `(seed, i)`, so the outcome does not depend
/// on `workers`.
pub fn monte_carlo_uncertainty(
    fringe: &Fringe,
    result: &ReconstructionResult,
    p: &IonCavityParams,
    seed: u64,
    opts: &MonteCarloOptions,
) -> Result<Uncertainty> {
    if !result.converged {
        return Err(Error::InvalidParameter("bootstrap needs a converged reconstruction".into()));
    }
    let trials = opts.trials.unwrap_or(fringe.trials());
    let mut inner = opts.inner.clone();
    inner.phase_offset = PhaseOffset::Fixed(result.phase_offset);
    let base_readout = readout(&p.with_drive(result.drive), &inner.ramsey)?;
    let model = model_fringe(&base_readout, fringe.phases(), result.phase_offset, &inner.ramsey.coherence)?;
    let model = Fringe::new(fringe.phases().to_vec(), model, trials)?;
    let spot_opts = RamseyOptions { backend: Backend::Full, ..inner.ramsey };
    let check_spots = opts.spot_check_every > 0 && inner.ramsey.backend == Backend::Eliminated;

    let draw = |i: usize| -> Result<Sample> {
        let noisy = sample_projection_noise_stream(&model, trials, seed, i as u64)?;
        let rec = match reconstruct(&noisy, p, Some(result.drive), &inner) {
            Ok(r) if r.converged => r,
            _ => return Ok(Sample { drive: None, spot_gap: None }),
        };
        let spot_gap = if check_spots && i.is_multiple_of(opts.spot_check_every) {
            let full = log_likelihood_with(&noisy, rec.drive, rec.phase_offset, p, &spot_opts)?;
            Some((full - rec.log_likelihood).abs())
        } else {
            None
        };
        Ok(Sample { drive: Some(rec.drive), spot_gap })
    };

    let (mut etas, mut deltas) = (Vec::new(), Vec::new());
    let (mut attempts, mut failures) = (0usize, 0usize);
    let mut spot_check_max_gap: Option<f64> = None;
    let mut converged = false;
    let batch = opts.check_every.max(1);
    while etas.len() < opts.max_samples {
        let samples = run_batch(attempts, batch, opts.workers, &draw)?;
        attempts += batch;
        for s in samples {
            match s.drive {
                Some(d) => {
                    etas.push(d.eta);
                    deltas.push(d.delta_n);
                }
                None => failures += 1,
            }
            if let Some(g) = s.spot_gap {
                spot_check_max_gap = Some(spot_check_max_gap.map_or(g, |m| m.max(g)));
            }
        }
        if failures as f64 > opts.max_failure_fraction * attempts as f64 {
            return Err(Error::NonConvergence(format!("{failures} of {attempts} bootstrap reconstructions failed")));
        }
        let n = etas.len();
        if n >= opts.min_samples && n > batch {
            let prev = n - batch;
            if settled(std_dev(&etas[..prev]), std_dev(&etas), opts.tolerance)
                && settled(std_dev(&deltas[..prev]), std_dev(&deltas), opts.tolerance)
            {
                converged = true;
                break;
            }
        }
    }

    let eta_err = std_dev(&etas);
    let delta_n_err = std_dev(&deltas);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let upper = Drive { eta: result.drive.eta + eta_err, delta_n: result.drive.delta_n + delta_n_err };
    let lower =
        Drive { eta: (result.drive.eta - eta_err).max(0.0), delta_n: (result.drive.delta_n - delta_n_err).max(0.0) };
    let dist_at = |d: Drive| -> Result<PhotonDistribution> {
        PhotonDistribution::from_state(&interaction_state(&p.with_drive(d), &inner.ramsey)?)
    };
    let (up, low) = (dist_at(upper)?, dist_at(lower)?);
    let qs: Vec<f64> = [mandel_q(&low), mandel_q(&up), result.mandel_q()].into_iter().flatten().collect();
    Ok(Uncertainty {
        eta_err,
        delta_n_err,
        eta_mean: mean(&etas),
        delta_n_mean: mean(&deltas),
        mean_n_lower: low.mean().min(result.mean_n()),
        mean_n_upper: up.mean().max(result.mean_n()),
        mandel_q_lower: qs.iter().cloned().reduce(f64::min),
        mandel_q_upper: qs.iter().cloned().reduce(f64::max),
        samples: etas.len(),
        failures,
        converged,
        spot_check_max_gap,
    })
}

fn run_batch<F>(start: usize, len: usize, workers: usize, draw: &F) -> Result<Vec<Sample>>
where
    F: Fn(usize) -> Result<Sample> + Sync,
{
    let workers = workers.clamp(1, len);
    if workers == 1 {
        return (start..start + len).map(draw).collect();
    }
    let chunk = len.div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = start + w * chunk;
                let hi = (lo + chunk).min(start + len);
                scope.spawn(move || (lo..hi).map(draw).collect::<Result<Vec<Sample>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(len);
        for h in handles {
            out.extend(h.join().map_err(|_| Error::Integration("bootstrap worker panicked".into()))??);
        }
        Ok(out)
    })
}

/// Smallest resolvable phase and photon-number change. Phases in units of π.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseResolution {
    /// Fitted shift of the noiseless reference fringe.
    pub reference_shift: f64,
    /// Standard deviation of the fitted shift under projection noise.
    pub sigma_phase: f64,
    /// `2σ`.
    pub resolution: f64,
    /// `resolution·π / (T g²/Δ)`.
    pub photon_resolution: f64,
    pub fits: usize,
    pub failures: usize,
}

/// Repeatedly adds projection noise to the fringe at `⟨n⟩ = 1` (coherent,
/// 51 points, 250 repetitions) and measures the spread of the fitted shift.
pub fn phase_resolution(
    p: &IonCavityParams,
    coh: &CoherenceModel,
    repetitions: usize,
    seed: u64,
) -> Result<PhaseResolution> {
    if repetitions < 1000 {
        return Err(Error::InvalidParameter(format!("need at least 1000 repetitions, got {repetitions}")));
    }
    let drive = Drive::from_photons(1.0, 0.0, p.kappa)?;
    let opts = RamseyOptions { coherence: *coh, ..RamseyOptions::default() };
    let r = readout(&p.with_drive(drive), &opts)?;
    let reference = fringe_from_readout(&r, &phase_grid(DEFAULT_POINTS), coh)?.with_trials(DEFAULT_TRIALS)?;
    let reference_shift = fit_fringe_with(&reference, &FitOptions::free(0.5))?.phase_shift;
    let fit_opts = FitOptions::free(reference_shift);

    let mut shifts = Vec::with_capacity(repetitions);
    let mut failures = 0;
    for i in 0..repetitions {
        let noisy = sample_projection_noise_stream(&reference, DEFAULT_TRIALS, seed, i as u64)?;
        match fit_fringe_with(&noisy, &fit_opts) {
            Ok(fit) => shifts.push(fit.phase_shift),
            Err(_) => failures += 1,
        }
    }
    if shifts.len() < 2 {
        return Err(Error::NonConvergence("too few successful phase fits".into()));
    }
    let sigma_phase = std_dev(&shifts);
    let resolution = 2.0 * sigma_phase;
    let per_photon = dispersive_shift(p.g, p.delta_pl)? * p.interaction_time;
    Ok(PhaseResolution {
        reference_shift,
        sigma_phase,
        resolution,
        photon_resolution: resolution * PI / per_photon,
        fits: shifts.len(),
        failures,
    })
}
