//! Photon-number calibration from detector counts and photodiode traces, and
//! the strong-pull figure of merit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{khz, mhz};

/// Relative systematic uncertainty of calibrated photon numbers. Reported
/// separately from statistical errors.
pub const SYSTEMATIC_MEAN_N: f64 = 0.2;

/// Cavity output path from intracavity photons to detector counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionChain {
    /// Probability that a photon leaves through the output mirror.
    pub p_out: f64,
    /// Path and detector efficiency behind the mirror.
    pub zeta: f64,
    /// Build-up correction of the counting window.
    pub build_up: f64,
    /// Counting window per repetition (s).
    pub window: f64,
    /// Repetitions whose counts are summed.
    pub repetitions: u32,
    /// Cavity field decay rate (rad/s).
    pub kappa: f64,
    /// Absolute uncertainty of `p_out`.
    #[serde(default)]
    pub p_out_err: f64,
    /// Absolute uncertainty of the total efficiency `p_out·ζ`.
    #[serde(default)]
    pub efficiency_err: f64,
}

impl Default for DetectionChain {
    /// Fiber-cavity setup: 38 kHz expected count rate at one intracavity photon.
    fn default() -> Self {
        let kappa = mhz(0.068);
        let p_out = 0.11;
        Self {
            p_out,
            zeta: khz(38.0) / crate::TWO_PI / (2.0 * kappa * p_out),
            build_up: 0.922,
            window: 50e-6,
            repetitions: 250,
            kappa,
            p_out_err: 0.02,
            efficiency_err: 0.01,
        }
    }
}

impl DetectionChain {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p_out", self.p_out), ("zeta", self.zeta), ("build-up correction", self.build_up)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(self.window > 0.0 && self.kappa > 0.0 && self.repetitions > 0) {
            return Err(Error::InvalidParameter("window, κ and repetitions must be positive".into()));
        }
        if !(self.p_out_err >= 0.0 && self.efficiency_err >= 0.0) {
            return Err(Error::InvalidParameter("uncertainties must be non-negative".into()));
        }
        Ok(())
    }

    /// `ε = p_out·ζ`.
    pub fn efficiency(&self) -> f64 {
        self.p_out * self.zeta
    }

    /// Detected count rate per intracavity photon, `2κε` (Hz).
    pub fn count_rate_per_photon(&self) -> f64 {
        2.0 * self.kappa * self.efficiency()
    }

    /// Counts per intracavity photon over all repetitions, without build-up.
    pub fn counts_per_photon(&self) -> f64 {
        self.count_rate_per_photon() * self.window * self.repetitions as f64
    }

    /// Calibration constant `C1 = C0/c`.
    pub fn calibration_counts(&self) -> f64 {
        self.counts_per_photon() / self.build_up
    }

    /// Uncertainty of [`Self::calibration_counts`] from the efficiency error.
    pub fn calibration_counts_err(&self) -> f64 {
        self.calibration_counts() * self.efficiency_err / self.efficiency()
    }
}

/// `⟨n⟩ = C/C1`.
pub fn mean_n_from_counts(counts: f64, chain: &DetectionChain) -> Result<f64> {
    chain.validate()?;
    if !(counts >= 0.0) {
        return Err(Error::InvalidParameter(format!("counts must be non-negative, got {counts}")));
    }
    Ok(counts / chain.calibration_counts())
}

/// Statistical uncertainty of [`mean_n_from_counts`]: efficiency error and
/// Poisson counting noise, to first order.
pub fn mean_n_from_counts_err(counts: f64, chain: &DetectionChain) -> Result<f64> {
    let n = mean_n_from_counts(counts, chain)?;
    let rel_eff = chain.efficiency_err / chain.efficiency();
    let rel_counts = if counts > 0.0 { counts.sqrt() / counts } else { 0.0 };
    Ok(n * (rel_eff * rel_eff + rel_counts * rel_counts).sqrt())
}

/// Counts expected at mean photon number `mean_n`.
pub fn expected_counts(mean_n: f64, chain: &DetectionChain) -> f64 {
    mean_n * chain.calibration_counts()
}

/// Photodiode trace of the drive beam and the counts recorded alongside it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotodiodeReading {
    /// Offset voltage (V).
    pub v_dc: f64,
    /// Amplitude of the noise oscillations (V).
    pub v_ac: f64,
    /// Detector counts over the chain's repetitions.
    pub counts: f64,
}

/// Coherent photons and thermal rate from a photodiode reading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotodiodeCalibration {
    /// Counts per volt.
    pub counts_per_volt: f64,
    /// Counts attributed to the noise oscillations.
    pub thermal_counts: f64,
    pub n_coh: f64,
    /// `δn` (rad/s).
    pub delta_n: f64,
    pub n_th: f64,
}

/// Splits the counts into a coherent part and a thermal part proportional to
/// `V_AC`: `S_V = C/V_DC`, `δn = κ S_V V_AC / C1`, `n_coh = (C − S_V V_AC)/C1`.
pub fn thermal_from_photodiode(r: &PhotodiodeReading, chain: &DetectionChain) -> Result<PhotodiodeCalibration> {
    chain.validate()?;
    if !(r.v_dc > 0.0) {
        return Err(Error::InvalidParameter("photodiode offset voltage must be positive".into()));
    }
    if !(r.v_ac >= 0.0 && r.counts >= 0.0) {
        return Err(Error::InvalidParameter("noise voltage and counts must be non-negative".into()));
    }
    let c1 = chain.calibration_counts();
    let counts_per_volt = r.counts / r.v_dc;
    let thermal_counts = counts_per_volt * r.v_ac;
    if thermal_counts > r.counts {
        return Err(Error::InvalidParameter("noise amplitude exceeds the offset voltage".into()));
    }
    let n_th = thermal_counts / c1;
    Ok(PhotodiodeCalibration {
        counts_per_volt,
        thermal_counts,
        n_coh: (r.counts - thermal_counts) / c1,
        delta_n: chain.kappa * n_th,
        n_th,
    })
}

/// `g²/(Δκ)` with `Δ = detuning_factor·γ`. All rates in the same units.
pub fn strong_pull_ratio(g: f64, gamma: f64, kappa: f64, detuning_factor: f64) -> Result<f64> {
    if !(gamma > 0.0 && detuning_factor > 0.0) {
        return Err(Error::InvalidParameter("linewidth and detuning factor must be positive".into()));
    }
    strong_pull_ratio_at(g, detuning_factor * gamma, kappa)
}

/// `g²/(Δκ)` for an explicit detuning `Δ`.
pub fn strong_pull_ratio_at(g: f64, detuning: f64, kappa: f64) -> Result<f64> {
    if !(g > 0.0 && detuning > 0.0 && kappa > 0.0) {
        return Err(Error::InvalidParameter("rates must be positive".into()));
    }
    Ok(g * g / (detuning * kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_chain_constants() {
        let chain = DetectionChain::default();
        assert!((chain.count_rate_per_photon() / 1e3 - 38.0).abs() < 1e-9);
        assert!((chain.counts_per_photon() - 475.0).abs() < 1e-9);
        assert!((chain.calibration_counts() - 475.0 / 0.922).abs() < 1e-9);
        assert!((chain.efficiency() - 0.04).abs() < 0.005);
    }

    #[test]
    fn counts_to_photons() {
        let chain = DetectionChain::default();
        let n = mean_n_from_counts(515.0, &chain).unwrap();
        assert_eq!(format!("{n:.3}"), "1.000");
        assert_eq!(mean_n_from_counts(0.0, &chain).unwrap(), 0.0);
        assert!(mean_n_from_counts(-1.0, &chain).is_err());
    }

    #[test]
    fn round_trip_through_expected_counts() {
        let chain = DetectionChain::default();
        for c in [0.0, 17.0, 515.0, 12345.6] {
            let back = expected_counts(mean_n_from_counts(c, &chain).unwrap(), &chain);
            assert!((back - c).abs() <= 1e-12 * c.max(1.0));
        }
    }

    #[test]
    fn calibration_uncertainty() {
        let chain = DetectionChain::default();
        let rel = chain.calibration_counts_err() / chain.calibration_counts();
        assert!(rel > 0.15 && rel < 0.3, "{rel}");
        let err = mean_n_from_counts_err(515.0, &chain).unwrap();
        assert!(err > rel * 0.999 && err < rel + 0.05);
    }

    #[test]
    fn pure_coherent_photodiode_trace() {
        let chain = DetectionChain::default();
        let r = PhotodiodeReading { v_dc: 1.3, v_ac: 0.0, counts: 400.0 };
        let cal = thermal_from_photodiode(&r, &chain).unwrap();
        assert_eq!(cal.delta_n, 0.0);
        assert!((cal.n_coh - mean_n_from_counts(400.0, &chain).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mixed_drive_split() {
        let chain = DetectionChain::default();
        let c1 = chain.calibration_counts();
        // Counts for 1.08 photons with the noise carrying 0.44 of them.
        let r = PhotodiodeReading { v_dc: 2.0, v_ac: 2.0 * 0.44 / 1.08, counts: 1.08 * c1 };
        let cal = thermal_from_photodiode(&r, &chain).unwrap();
        assert!((cal.n_coh - 0.64).abs() < 1e-12);
        assert!((cal.n_th - 0.44).abs() < 1e-12);
        assert!((cal.delta_n - 0.44 * chain.kappa).abs() < 1e-6);
    }

    #[test]
    fn photodiode_errors() {
        let chain = DetectionChain::default();
        let zero = PhotodiodeReading { v_dc: 0.0, v_ac: 0.1, counts: 10.0 };
        assert!(thermal_from_photodiode(&zero, &chain).is_err());
        let too_noisy = PhotodiodeReading { v_dc: 1.0, v_ac: 1.5, counts: 10.0 };
        assert!(thermal_from_photodiode(&too_noisy, &chain).is_err());
    }

    #[test]
    fn strong_pull_table() {
        let ca = strong_pull_ratio(1.53, 11.5, 1.9e-3, 10.0).unwrap();
        assert!((ca / 10.7 - 1.0).abs() < 0.01, "{ca}");
        let cs = strong_pull_ratio(2.8, 2.6, 1.9e-3, 10.0).unwrap();
        assert!((cs / 159.0 - 1.0).abs() < 0.01, "{cs}");
        let here = strong_pull_ratio_at(mhz(0.968), mhz(125.0), mhz(0.068)).unwrap();
        assert!((here - 0.11).abs() < 0.005, "{here}");
        assert!(strong_pull_ratio(1.0, 0.0, 1.0, 10.0).is_err());
    }

    proptest! {
        #[test]
        fn counts_are_linear(c in 0.0f64..1e5, k in 0.0f64..10.0) {
            let chain = DetectionChain::default();
            let a = mean_n_from_counts(c, &chain).unwrap();
            let b = mean_n_from_counts(k * c, &chain).unwrap();
            prop_assert!((b - k * a).abs() <= 1e-12 * b.abs().max(1.0));
        }

        #[test]
        fn thermal_rate_is_linear_in_noise(v_ac in 0.0f64..0.5) {
            let chain = DetectionChain::default();
            let one = thermal_from_photodiode(&PhotodiodeReading { v_dc: 1.0, v_ac, counts: 500.0 }, &chain).unwrap();
            let two = thermal_from_photodiode(&PhotodiodeReading { v_dc: 1.0, v_ac: 2.0 * v_ac, counts: 500.0 }, &chain).unwrap();
            prop_assert!((two.delta_n - 2.0 * one.delta_n).abs() <= 1e-9 * one.delta_n.max(1.0));
        }

        #[test]
        fn pull_scales_with_coupling_squared(g in 0.1f64..10.0) {
            let a = strong_pull_ratio(g, 11.5, 0.1, 10.0).unwrap();
            let b = strong_pull_ratio(2.0 * g, 11.5, 0.1, 10.0).unwrap();
            prop_assert!((b / a - 4.0).abs() < 1e-12);
        }
    }
}
