//! JSON experiment configuration. Frequencies are given in MHz (ordinary
//! frequency, converted to rad/s on load) and times in μs.

use std::path::Path;

use ionprobe::calibration::{DetectionChain, PhotodiodeReading};
use ionprobe::model::{Drive, IonCavityParams, Transition};
use ionprobe::ramsey::{phase_grid, Backend, CoherenceMode, CoherenceModel, DEFAULT_POINTS};
use ionprobe::{mhz, TWO_PI};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA: &str = "ionprobe/v1";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema: String,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub transition: Transition,
    #[serde(default)]
    pub drive: DriveConfig,
    #[serde(default)]
    pub coherence: CoherenceConfig,
    pub phase_points: Option<usize>,
    pub phases_pi: Option<Vec<f64>>,
    pub trials: Option<u32>,
    pub seed: Option<u64>,
    pub backend: Option<BackendName>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub reconstruction: ReconstructionConfig,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    pub detection: Option<DetectionConfig>,
    pub strong_pull: Option<Vec<PullSystem>>,
    pub phase_resolution: Option<PhaseResolutionConfig>,
    pub out: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub g_mhz: Option<f64>,
    pub kappa_mhz: Option<f64>,
    pub detuning_mhz: Option<f64>,
    pub cavity_detuning_mhz: Option<f64>,
    pub ramsey_detuning_mhz: Option<f64>,
    pub dark_offset_mhz: Option<f64>,
    pub gamma_ps_mhz: Option<f64>,
    pub gamma_pd_mhz: Option<f64>,
    pub gamma_pd32_mhz: Option<f64>,
    pub n_max: Option<usize>,
    pub interaction_time_us: Option<f64>,
}

/// Either `η`/`δn` directly, `n_coh`/`n_th`, or a mean with a thermal fraction.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub eta_mhz: Option<f64>,
    pub delta_n_mhz: Option<f64>,
    pub n_coh: Option<f64>,
    pub n_th: Option<f64>,
    pub mean_n: Option<f64>,
    pub thermal_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceConfig {
    pub b0: Option<f64>,
    pub vacuum_contrast: Option<f64>,
    pub mode: Option<CoherenceName>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum CoherenceName {
    Affine,
    Dephasing,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendName {
    Full,
    Eliminated,
}

impl From<BackendName> for Backend {
    fn from(b: BackendName) -> Self {
        match b {
            BackendName::Full => Backend::Full,
            BackendName::Eliminated => Backend::Eliminated,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Pin the offset to the value expected at this mean photon number.
    pub pinned_offset_mean_n: Option<f64>,
    pub phase_hint_pi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionConfig {
    pub phase_offset_pi: Option<f64>,
    #[serde(default)]
    pub fit_phase_offset: bool,
    pub starts: Option<usize>,
    pub restarts: Option<usize>,
    pub init: Option<DriveConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub min_samples: Option<usize>,
    pub max_samples: Option<usize>,
    pub check_every: Option<usize>,
    pub workers: Option<usize>,
    pub trials: Option<u32>,
    #[serde(default)]
    pub full_model: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mean_n: Option<Vec<f64>>,
    pub thermal_fraction: Option<f64>,
    pub transitions: Option<Vec<Transition>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    pub p_out: Option<f64>,
    pub zeta: Option<f64>,
    pub build_up: Option<f64>,
    pub window_us: Option<f64>,
    pub repetitions: Option<u32>,
    pub kappa_mhz: Option<f64>,
    pub p_out_err: Option<f64>,
    pub efficiency_err: Option<f64>,
    pub counts: Option<u64>,
    pub v_dc: Option<f64>,
    pub v_ac: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PullSystem {
    pub name: String,
    pub g_mhz: f64,
    pub kappa_mhz: f64,
    pub gamma_mhz: Option<f64>,
    pub detuning_factor: Option<f64>,
    pub detuning_mhz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseResolutionConfig {
    pub repetitions: Option<usize>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub backend: Option<BackendName>,
}

/// Parameters after unit conversion, echoed into every output (rad/s, s).
#[derive(Clone, Debug, Serialize)]
pub struct ResolvedParams {
    pub g_rad_s: f64,
    pub kappa_rad_s: f64,
    pub detuning_rad_s: f64,
    pub cavity_detuning_rad_s: f64,
    pub ramsey_detuning_rad_s: f64,
    pub dark_offset_rad_s: f64,
    pub gamma_ps_rad_s: f64,
    pub gamma_pd_rad_s: f64,
    pub gamma_pd32_rad_s: f64,
    pub transition: Transition,
    pub n_max: usize,
    pub interaction_time_s: f64,
    pub eta_rad_s: f64,
    pub delta_n_rad_s: f64,
    pub b0: f64,
    pub vacuum_contrast: f64,
    pub coherence: CoherenceName,
    pub backend: BackendName,
    pub trials: Option<u32>,
    pub seed: u64,
    pub phases_pi: Vec<f64>,
}

/// A loaded configuration together with its resolved form.
#[derive(Debug)]
pub struct Config {
    pub file: ConfigFile,
    /// The file as parsed JSON, with keys sorted; part of the hash.
    pub raw: serde_json::Value,
    pub params: IonCavityParams,
    pub coherence: CoherenceModel,
    pub backend: Backend,
    pub seed: u64,
    pub phases: Vec<f64>,
    pub resolved: ResolvedParams,
}

pub fn load(path: Option<&Path>, overrides: Overrides) -> Result<Config, CliError> {
    let text = match path {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?,
        None => format!("{{\"schema\": \"{SCHEMA}\"}}"),
    };
    let file = parse(&text)?;
    let mut cfg = resolve(file, overrides)?;
    cfg.raw = serde_json::from_str(&text).map_err(|e| CliError::config(format!("invalid config: {e}")))?;
    Ok(cfg)
}

pub fn parse(text: &str) -> Result<ConfigFile, CliError> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))?;
    if file.schema != SCHEMA {
        return Err(CliError::config(format!("unsupported schema `{}`, expected `{SCHEMA}`", file.schema)));
    }
    Ok(file)
}

fn or(v: Option<f64>, default: f64) -> f64 {
    v.unwrap_or(default)
}

fn from_mhz(v: Option<f64>, default_rad_s: f64) -> f64 {
    v.map(mhz).unwrap_or(default_rad_s)
}

pub fn resolve(file: ConfigFile, overrides: Overrides) -> Result<Config, CliError> {
    let d = IonCavityParams::default();
    let s = &file.system;
    let default_g = match file.transition {
        Transition::Dp => d.g,
        Transition::DpPp => d.second_transition().g,
    };
    let mut params = IonCavityParams {
        g: from_mhz(s.g_mhz, default_g),
        kappa: from_mhz(s.kappa_mhz, d.kappa),
        delta_pl: from_mhz(s.detuning_mhz, d.delta_pl),
        delta_cl: from_mhz(s.cavity_detuning_mhz, d.delta_cl),
        delta_dr: from_mhz(s.ramsey_detuning_mhz, d.delta_dr),
        delta_ssp: from_mhz(s.dark_offset_mhz, d.delta_ssp),
        gamma_ps: from_mhz(s.gamma_ps_mhz, d.gamma_ps),
        gamma_pd: from_mhz(s.gamma_pd_mhz, d.gamma_pd),
        gamma_pd32: from_mhz(s.gamma_pd32_mhz, d.gamma_pd32),
        n_max: s.n_max.unwrap_or(d.n_max),
        interaction_time: s.interaction_time_us.map(|t| t * 1e-6).unwrap_or(d.interaction_time),
        transition: file.transition,
        ..d
    };
    let drive = drive_from(&file.drive, params.kappa)?.unwrap_or_default();
    params = params.with_drive(drive);
    params.validate()?;

    let dc = CoherenceModel::default();
    let coherence_name = file.coherence.mode.unwrap_or(CoherenceName::Affine);
    let coherence = CoherenceModel {
        b0: or(file.coherence.b0, dc.b0),
        contrast_at_vacuum: or(file.coherence.vacuum_contrast, dc.contrast_at_vacuum),
        mode: match coherence_name {
            CoherenceName::Affine => CoherenceMode::Affine,
            CoherenceName::Dephasing => CoherenceMode::Dephasing,
        },
    };
    coherence.validate()?;

    let phases = match (&file.phases_pi, file.phase_points) {
        (Some(_), Some(_)) => return Err(CliError::config("give either `phases_pi` or `phase_points`, not both")),
        (Some(list), None) => list.clone(),
        (None, Some(n)) if n < 3 => return Err(CliError::config("`phase_points` must be at least 3")),
        (None, n) => phase_grid(n.unwrap_or(DEFAULT_POINTS)),
    };
    if file.trials == Some(0) {
        return Err(CliError::config("`trials` must be positive"));
    }

    let backend_name = overrides.backend.or(file.backend).unwrap_or(BackendName::Full);
    let seed = overrides.seed.or(file.seed).unwrap_or(0);
    let resolved = ResolvedParams {
        g_rad_s: params.g,
        kappa_rad_s: params.kappa,
        detuning_rad_s: params.delta_pl,
        cavity_detuning_rad_s: params.delta_cl,
        ramsey_detuning_rad_s: params.delta_dr,
        dark_offset_rad_s: params.delta_ssp,
        gamma_ps_rad_s: params.gamma_ps,
        gamma_pd_rad_s: params.gamma_pd,
        gamma_pd32_rad_s: params.gamma_pd32,
        transition: params.transition,
        n_max: params.n_max,
        interaction_time_s: params.interaction_time,
        eta_rad_s: params.eta,
        delta_n_rad_s: params.delta_n,
        b0: coherence.b0,
        vacuum_contrast: coherence.contrast_at_vacuum,
        coherence: coherence_name,
        backend: backend_name,
        trials: file.trials,
        seed,
        phases_pi: phases.clone(),
    };
    Ok(Config {
        raw: serde_json::Value::Null,
        params,
        coherence,
        backend: backend_name.into(),
        seed,
        phases,
        resolved,
        file,
    })
}

/// `None` when no drive field is set.
pub fn drive_from(c: &DriveConfig, kappa: f64) -> Result<Option<Drive>, CliError> {
    let direct = c.eta_mhz.is_some() || c.delta_n_mhz.is_some();
    let photons = c.n_coh.is_some() || c.n_th.is_some();
    let mean = c.mean_n.is_some() || c.thermal_fraction.is_some();
    let drive = match (direct, photons, mean) {
        (false, false, false) => return Ok(None),
        (true, false, false) => Drive::new(or(c.eta_mhz, 0.0) * TWO_PI * 1e6, or(c.delta_n_mhz, 0.0) * TWO_PI * 1e6)?,
        (false, true, false) => Drive::from_photons(or(c.n_coh, 0.0), or(c.n_th, 0.0), kappa)?,
        (false, false, true) => {
            let mean_n = c.mean_n.ok_or_else(|| CliError::config("`thermal_fraction` needs `mean_n`"))?;
            Drive::from_mean(mean_n, or(c.thermal_fraction, 0.0), kappa)?
        }
        _ => {
            return Err(CliError::config(
                "drive must use exactly one of (eta_mhz, delta_n_mhz), (n_coh, n_th) or (mean_n, thermal_fraction)",
            ))
        }
    };
    Ok(Some(drive))
}

impl Config {
    pub fn detection(&self) -> Result<(DetectionChain, Option<f64>, Option<PhotodiodeReading>), CliError> {
        let d = DetectionChain::default();
        let c = self.file.detection.as_ref().ok_or_else(|| CliError::config("config has no `detection` section"))?;
        let chain = DetectionChain {
            p_out: or(c.p_out, d.p_out),
            zeta: or(c.zeta, d.zeta),
            build_up: or(c.build_up, d.build_up),
            window: c.window_us.map(|t| t * 1e-6).unwrap_or(d.window),
            repetitions: c.repetitions.unwrap_or(d.repetitions),
            kappa: c.kappa_mhz.map(mhz).unwrap_or(self.params.kappa),
            p_out_err: or(c.p_out_err, d.p_out_err),
            efficiency_err: or(c.efficiency_err, d.efficiency_err),
        };
        chain.validate()?;
        let counts = c.counts.map(|n| n as f64);
        let reading = match (c.v_dc, c.v_ac) {
            (None, None) => None,
            (Some(v_dc), v_ac) => {
                let counts = counts.ok_or_else(|| CliError::config("photodiode voltages need `counts`"))?;
                Some(PhotodiodeReading { v_dc, v_ac: v_ac.unwrap_or(0.0), counts })
            }
            (None, Some(_)) => return Err(CliError::config("`v_ac` needs `v_dc`")),
        };
        Ok((chain, counts, reading))
    }
}

/// Provenance block attached to every output.
#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub schema: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub resolved: ResolvedParams,
}

impl Metadata {
    pub fn new(command: &str, config: &Config) -> Self {
        let bytes = serde_json::to_vec(&(command, &config.resolved, &config.raw)).expect("config serializes");
        Self {
            schema: SCHEMA,
            command: command.to_string(),
            config_sha256: hex::encode(Sha256::digest(&bytes)),
            seed: config.seed,
            resolved: config.resolved.clone(),
        }
    }
}
