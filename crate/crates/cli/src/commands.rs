use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ionprobe::calibration::{
    expected_counts, mean_n_from_counts, mean_n_from_counts_err, strong_pull_ratio, strong_pull_ratio_at,
    thermal_from_photodiode, DetectionChain, PhotodiodeCalibration, SYSTEMATIC_MEAN_N,
};
use ionprobe::mhz;
use ionprobe::model::{expected_phase_shift, to_mhz, Drive, IonCavityParams, Transition, SECOND_TRANSITION_COUPLING};
use ionprobe::ramsey::Backend;
use ionprobe::ramsey::{
    fit_fringe, fit_fringe_with, read_fringe_csv, sample_projection_noise, sample_projection_noise_stream,
    simulate_fringe_with, write_fringe_csv, FitOptions, Fringe, FringeFile, FringeFit, RamseyOptions,
};
use ionprobe::reconstruction::{
    monte_carlo_uncertainty, phase_resolution, reconstruct, MonteCarloOptions, PhaseOffset, PhaseResolution,
    ReconstructOptions, ResultRecord,
};
use serde::Serialize;

use crate::config::{drive_from, Config, Metadata, PullSystem};
use crate::error::CliError;

const DEFAULT_SWEEP: [f64; 5] = [0.0, 0.4, 0.8, 1.2, 1.6];
const DEFAULT_PHASE_REPETITIONS: usize = 50_000;

fn write_bytes(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, bytes).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(|e| CliError::io(format!("cannot write to stdout: {e}")))
        }
    }
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
    text.push('\n');
    write_bytes(out, text.as_bytes())
}

fn read_fringe(path: &Path) -> Result<FringeFile, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(format!("cannot open {}: {e}", path.display())))?;
    read_fringe_csv(file).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn ramsey_options(cfg: &Config) -> RamseyOptions {
    RamseyOptions { backend: cfg.backend, coherence: cfg.coherence, step: None }
}

fn provenance(meta: &Metadata) -> Vec<String> {
    vec![
        format!("ionprobe {}", meta.command),
        format!("config_sha256 {}", meta.config_sha256),
        format!("seed {}", meta.seed),
    ]
}

/// Fit summary with phases in units of π.
#[derive(Debug, Serialize)]
pub struct FitRecord {
    pub phase_shift_pi: f64,
    pub phase_shift_err_pi: f64,
    pub contrast: f64,
    pub contrast_err: f64,
    pub amplitude: f64,
    pub amplitude_err: f64,
    pub offset: f64,
    pub offset_err: f64,
    pub offset_pinned: bool,
    pub residual_sum_squares: f64,
    pub iterations: usize,
}

impl From<&FringeFit> for FitRecord {
    fn from(f: &FringeFit) -> Self {
        Self {
            phase_shift_pi: f.phase_shift,
            phase_shift_err_pi: f.phase_err,
            contrast: f.contrast,
            contrast_err: f.contrast_err(),
            amplitude: f.amplitude,
            amplitude_err: f.amplitude_err,
            offset: f.offset,
            offset_err: f.offset_err,
            offset_pinned: f.offset_pinned,
            residual_sum_squares: f.residual_sum_squares,
            iterations: f.iterations,
        }
    }
}

fn free_fit(fringe: &Fringe, p: &IonCavityParams) -> Result<FringeFit, CliError> {
    let hint = expected_phase_shift(p.drive().mean_n(p.kappa), p)? / PI;
    Ok(fit_fringe_with(fringe, &FitOptions::free(hint))?)
}

#[derive(Serialize)]
struct SimulateSidecar<'a> {
    mean_n: f64,
    n_coh: f64,
    n_th: f64,
    expected_shift_pi: f64,
    fit_exact: FitRecord,
    fit_sampled: Option<FitRecord>,
    fringe: Option<String>,
    meta: &'a Metadata,
}

pub fn simulate(cfg: &Config, out: Option<&Path>) -> Result<(), CliError> {
    let meta = Metadata::new("simulate", cfg);
    let p = &cfg.params;
    let exact = simulate_fringe_with(p, &cfg.phases, &ramsey_options(cfg))?;
    let fit_exact = FitRecord::from(&free_fit(&exact, p)?);
    let (mut file, fit_sampled) = match cfg.file.trials {
        Some(trials) => {
            let exact = exact.with_trials(trials)?;
            let noisy = sample_projection_noise(&exact, trials, cfg.seed)?;
            let fit = free_fit(&noisy, p).ok().map(|f| FitRecord::from(&f));
            (FringeFile { fringe: noisy, exact: Some(exact.p_d().to_vec()), comments: Vec::new() }, fit)
        }
        None => (FringeFile::new(exact), None),
    };
    file.comments = provenance(&meta);
    let mut csv = Vec::new();
    write_fringe_csv(&mut csv, &file)?;
    write_bytes(out, &csv)?;
    if let Some(out) = out {
        let sidecar = SimulateSidecar {
            mean_n: p.drive().mean_n(p.kappa),
            n_coh: p.n_coh(),
            n_th: p.n_th(),
            expected_shift_pi: expected_phase_shift(p.drive().mean_n(p.kappa), p)? / PI,
            fit_exact,
            fit_sampled,
            fringe: out.file_name().map(|n| n.to_string_lossy().into_owned()),
            meta: &meta,
        };
        write_json(Some(&sidecar_path(out)), &sidecar)?;
    }
    Ok(())
}

/// `fringe.csv` → `fringe.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}

#[derive(Serialize)]
struct FitOutput<'a> {
    #[serde(flatten)]
    fit: FitRecord,
    points: usize,
    trials: u32,
    meta: &'a Metadata,
}

pub fn fit(cfg: &Config, fringe_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let meta = Metadata::new("fit", cfg);
    let fringe = read_fringe(fringe_path)?.fringe;
    let fit = match cfg.file.fit.pinned_offset_mean_n {
        Some(n) => fit_fringe(&fringe, Some(n), &cfg.params, &cfg.coherence)?,
        None => fit_fringe_with(&fringe, &FitOptions::free(cfg.file.fit.phase_hint_pi.unwrap_or(0.5)))?,
    };
    let output = FitOutput { fit: FitRecord::from(&fit), points: fringe.len(), trials: fringe.trials(), meta: &meta };
    write_json(out, &output)
}

#[derive(Serialize)]
struct ReconstructOutput<'a> {
    #[serde(flatten)]
    record: ResultRecord,
    phase_offset_pi: f64,
    truncation_ok: bool,
    meta: &'a Metadata,
}

pub fn reconstruct_cmd(cfg: &Config, fringe_path: &Path, bootstrap: bool, out: Option<&Path>) -> Result<(), CliError> {
    let command = if bootstrap { "uncertainty" } else { "reconstruct" };
    let meta = Metadata::new(command, cfg);
    let fringe = read_fringe(fringe_path)?.fringe;
    let rc = &cfg.file.reconstruction;
    let mut opts = ReconstructOptions::with_backend(cfg.backend).with_coherence(cfg.coherence);
    opts.phase_offset = match (rc.fit_phase_offset, rc.phase_offset_pi) {
        (true, Some(_)) => return Err(CliError::config("give either `phase_offset_pi` or `fit_phase_offset`")),
        (true, None) => PhaseOffset::Fitted,
        (false, v) => PhaseOffset::Fixed(v.unwrap_or(0.0)),
    };
    if let Some(s) = rc.starts {
        opts.starts = s.max(1);
    }
    if let Some(r) = rc.restarts {
        opts.restarts = r;
    }
    let init = match &rc.init {
        Some(d) => drive_from(d, cfg.params.kappa)?,
        None => None,
    };
    let mut result = reconstruct(&fringe, &cfg.params, init, &opts)?;
    result.seed = Some(cfg.seed);
    let converged = result.converged;
    if bootstrap && converged {
        let b = &cfg.file.bootstrap;
        let mut mc = MonteCarloOptions::default().with_coherence(cfg.coherence);
        mc.trials = b.trials;
        if b.full_model {
            mc.inner.ramsey.backend = Backend::Full;
        }
        if let Some(n) = b.min_samples {
            mc.min_samples = n;
        }
        if let Some(n) = b.max_samples {
            mc.max_samples = n;
        }
        if let Some(n) = b.check_every {
            mc.check_every = n.max(1);
        }
        if let Some(n) = b.workers {
            mc.workers = n.max(1);
        }
        result.uncertainty = Some(monte_carlo_uncertainty(&fringe, &result, &cfg.params, cfg.seed, &mc)?);
    }
    let output = ReconstructOutput {
        record: result.to_record(),
        phase_offset_pi: result.phase_offset,
        truncation_ok: result.distribution.truncation_ok(),
        meta: &meta,
    };
    write_json(out, &output)?;
    if !converged {
        return Err(CliError::numerical("reconstruction did not converge"));
    }
    Ok(())
}

#[derive(Serialize)]
struct CalibrateOutput<'a> {
    efficiency: f64,
    count_rate_per_photon_hz: f64,
    counts_per_photon: f64,
    calibration_counts: f64,
    calibration_counts_err: f64,
    counts: Option<f64>,
    mean_n: Option<f64>,
    mean_n_err: Option<f64>,
    mean_n_systematic: Option<f64>,
    photodiode: Option<PhotodiodeCalibration>,
    chain: &'a DetectionChain,
    meta: &'a Metadata,
}

pub fn calibrate(cfg: &Config, out: Option<&Path>) -> Result<(), CliError> {
    let meta = Metadata::new("calibrate", cfg);
    let (chain, counts, reading) = cfg.detection()?;
    let mean_n = counts.map(|c| mean_n_from_counts(c, &chain)).transpose()?;
    let mean_n_err = counts.map(|c| mean_n_from_counts_err(c, &chain)).transpose()?;
    let photodiode = reading.map(|r| thermal_from_photodiode(&r, &chain)).transpose()?;
    let output = CalibrateOutput {
        efficiency: chain.efficiency(),
        count_rate_per_photon_hz: chain.count_rate_per_photon(),
        counts_per_photon: chain.counts_per_photon(),
        calibration_counts: expected_counts(1.0, &chain),
        calibration_counts_err: chain.calibration_counts_err(),
        counts,
        mean_n,
        mean_n_err,
        mean_n_systematic: mean_n.map(|n| SYSTEMATIC_MEAN_N * n),
        photodiode,
        chain: &chain,
        meta: &meta,
    };
    write_json(out, &output)
}

pub const SWEEP_COLUMNS: &str =
    "transition,mean_n,n_coh,n_th,phase_shift_pi,phase_shift_err_pi,contrast,contrast_err,offset,expected_shift_pi";

pub fn sweep(cfg: &Config, only: Option<Transition>, out: Option<&Path>) -> Result<(), CliError> {
    let meta = Metadata::new("sweep", cfg);
    let sc = &cfg.file.sweep;
    let values = sc.mean_n.clone().unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
    if values.len() < 2 {
        return Err(CliError::config("a sweep needs at least two `mean_n` values"));
    }
    let fraction = sc.thermal_fraction.unwrap_or(0.0);
    let mut transitions = sc.transitions.clone().unwrap_or_else(|| vec![Transition::Dp, Transition::DpPp]);
    if let Some(t) = only {
        transitions.retain(|&x| x == t);
        if transitions.is_empty() {
            return Err(CliError::config(format!("transition {} is not part of the sweep", t.label())));
        }
    }
    // The configured coupling belongs to the configured transition.
    let mut base = IonCavityParams { transition: Transition::Dp, ..cfg.params.clone() };
    if cfg.params.transition == Transition::DpPp {
        base.g /= SECOND_TRANSITION_COUPLING;
    }
    let opts = ramsey_options(cfg);

    let mut text = String::new();
    for line in provenance(&meta) {
        let _ = writeln!(text, "# {line}");
    }
    let _ = writeln!(text, "# thermal_fraction {fraction}");
    let _ = writeln!(
        text,
        "# trials {}",
        cfg.file.trials.map_or("none (exact probabilities)".to_string(), |m| m.to_string())
    );
    let _ = writeln!(text, "# transition: coupled qubit transition (DP or DpPp)");
    let _ = writeln!(text, "# mean_n, n_coh, n_th: photons of the empty driven cavity");
    let _ = writeln!(text, "# phase_shift_pi, phase_shift_err_pi: fitted fringe shift and its error, units of pi");
    let _ = writeln!(text, "# contrast, contrast_err, offset: fitted A/B, its error, and B");
    let _ = writeln!(text, "# expected_shift_pi: T g^2/Delta <n>, units of pi");
    let _ = writeln!(text, "{SWEEP_COLUMNS}");

    let mut row = 0u64;
    for &t in &transitions {
        let tp = match t {
            Transition::Dp => base.clone(),
            Transition::DpPp => base.second_transition(),
        };
        for &n in &values {
            let p = tp.with_drive(Drive::from_mean(n, fraction, tp.kappa)?);
            let mut fringe = simulate_fringe_with(&p, &cfg.phases, &opts)?;
            if let Some(trials) = cfg.file.trials {
                fringe = sample_projection_noise_stream(&fringe.with_trials(trials)?, trials, cfg.seed, row)?;
            }
            row += 1;
            let fit = free_fit(&fringe, &p)?;
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{},{},{},{}",
                t.label(),
                n,
                p.n_coh(),
                p.n_th(),
                fit.phase_shift,
                fit.phase_err,
                fit.contrast,
                fit.contrast_err(),
                fit.offset,
                expected_phase_shift(n, &p)? / PI
            );
        }
    }
    write_bytes(out, text.as_bytes())
}

#[derive(Serialize)]
struct PhaseResolutionOutput<'a> {
    #[serde(flatten)]
    result: PhaseResolution,
    repetitions: usize,
    meta: &'a Metadata,
}

pub fn phase_resolution_cmd(cfg: &Config, out: Option<&Path>) -> Result<(), CliError> {
    let meta = Metadata::new("phase-resolution", cfg);
    let repetitions =
        cfg.file.phase_resolution.as_ref().and_then(|c| c.repetitions).unwrap_or(DEFAULT_PHASE_REPETITIONS);
    let result = phase_resolution(&cfg.params, &cfg.coherence, repetitions, cfg.seed)?;
    write_json(out, &PhaseResolutionOutput { result, repetitions, meta: &meta })
}

fn default_pull_systems(p: &IonCavityParams) -> Vec<PullSystem> {
    vec![
        PullSystem {
            name: "Ca+ (fiber cavity, narrow linewidth)".into(),
            g_mhz: 1.53,
            kappa_mhz: 0.0019,
            gamma_mhz: Some(11.5),
            detuning_factor: Some(10.0),
            detuning_mhz: None,
        },
        PullSystem {
            name: "Cs (fiber cavity, narrow linewidth)".into(),
            g_mhz: 2.8,
            kappa_mhz: 0.0019,
            gamma_mhz: Some(2.6),
            detuning_factor: Some(10.0),
            detuning_mhz: None,
        },
        PullSystem {
            name: "configured system".into(),
            g_mhz: to_mhz(p.g),
            kappa_mhz: to_mhz(p.kappa),
            gamma_mhz: None,
            detuning_factor: None,
            detuning_mhz: Some(to_mhz(p.delta_pl)),
        },
    ]
}

pub fn strong_pull(cfg: &Config, out: Option<&Path>) -> Result<(), CliError> {
    let meta = Metadata::new("strong-pull", cfg);
    let systems = cfg.file.strong_pull.clone().unwrap_or_else(|| default_pull_systems(&cfg.params));
    let mut text = String::new();
    for line in provenance(&meta) {
        let _ = writeln!(text, "# {line}");
    }
    let _ = writeln!(
        text,
        "# ratio = g^2/(Delta kappa); above 1 the qubit state pulls the cavity by more than its linewidth"
    );
    let _ = writeln!(text, "name,g_mhz,kappa_mhz,detuning_mhz,ratio");
    for s in &systems {
        let (detuning, ratio) = match (s.detuning_mhz, s.gamma_mhz) {
            (Some(d), None) => (d, strong_pull_ratio_at(mhz(s.g_mhz), mhz(d), mhz(s.kappa_mhz))?),
            (None, Some(gamma)) => {
                let factor = s.detuning_factor.unwrap_or(10.0);
                (factor * gamma, strong_pull_ratio(mhz(s.g_mhz), mhz(gamma), mhz(s.kappa_mhz), factor)?)
            }
            _ => {
                return Err(CliError::config(format!(
                    "system `{}` needs exactly one of `detuning_mhz` or `gamma_mhz`",
                    s.name
                )))
            }
        };
        let _ =
            writeln!(text, "\"{}\",{},{},{},{}", s.name.replace('"', "\"\""), s.g_mhz, s.kappa_mhz, detuning, ratio);
    }
    write_bytes(out, text.as_bytes())
}
