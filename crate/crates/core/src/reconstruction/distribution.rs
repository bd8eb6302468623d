use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{partial_trace, DensityMatrix};

/// Photon-number probabilities `p(0..=n_max)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhotonDistribution {
    p: Vec<f64>,
}

/// Largest acceptable weight in the last Fock state.
pub const TAIL_LIMIT: f64 = 1e-3;

impl PhotonDistribution {
    /// Validates `p(n) ∈ [0, 1]` and `Σ p = 1` within 1e-6. Round-off below
    /// zero (down to −1e-9) is clipped.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidState("empty photon distribution".into()));
        }
        let mut p = p;
        for v in p.iter_mut() {
            if !v.is_finite() || *v < -1e-9 || *v > 1.0 + 1e-9 {
                return Err(Error::InvalidState(format!("probability {v} outside [0, 1]")));
            }
            *v = v.clamp(0.0, 1.0);
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidState(format!("probabilities sum to {total}")));
        }
        Ok(Self { p })
    }

    /// Cavity photon statistics of an `atom ⊗ cavity` state.
    pub fn from_state(state: &DensityMatrix<f64>) -> Result<Self> {
        let cavity = partial_trace(state, 1)?;
        Self::new(cavity.populations())
    }

    /// Poissonian statistics truncated at `n_max` and renormalized.
    pub fn poisson(mean: f64, n_max: usize) -> Result<Self> {
        Self::displaced_thermal(mean, 0.0, n_max)
    }

    /// Bose–Einstein statistics truncated at `n_max` and renormalized.
    pub fn thermal(mean: f64, n_max: usize) -> Result<Self> {
        Self::displaced_thermal(0.0, mean, n_max)
    }

    /// Statistics of a coherent state with `n_coh` photons displaced onto a
    /// thermal state with `n_th` photons, truncated and renormalized.
    pub fn displaced_thermal(n_coh: f64, n_th: f64, n_max: usize) -> Result<Self> {
        if !(n_coh >= 0.0 && n_th >= 0.0 && n_coh.is_finite() && n_th.is_finite()) {
            return Err(Error::InvalidParameter("photon numbers must be non-negative".into()));
        }
        let mut p = vec![0.0; n_max + 1];
        if n_th == 0.0 {
            // Poisson, built recursively.
            p[0] = (-n_coh).exp();
            for n in 1..=n_max {
                p[n] = p[n - 1] * n_coh / n as f64;
            }
        } else {
            // p(n) = n_thⁿ/(1+n_th)ⁿ⁺¹ · e^{−x} · L_n(−y), x = n_coh/(1+n_th),
            // y = n_coh/(n_th(1+n_th)).
            let x = n_coh / (1.0 + n_th);
            let y = -n_coh / (n_th * (1.0 + n_th));
            let ratio = n_th / (1.0 + n_th);
            let (mut l_prev, mut l) = (0.0, 1.0);
            let mut geometric = 1.0 / (1.0 + n_th);
            for (n, slot) in p.iter_mut().enumerate() {
                if n > 0 {
                    let nf = n as f64;
                    let next = ((2.0 * nf - 1.0 - y) * l - (nf - 1.0) * l_prev) / nf;
                    l_prev = l;
                    l = next;
                    geometric *= ratio;
                }
                *slot = geometric * (-x).exp() * l;
            }
        }
        let total: f64 = p.iter().sum();
        Self::new(p.into_iter().map(|v| v / total).collect())
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn n_max(&self) -> usize {
        self.p.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.p.iter().enumerate().map(|(n, v)| n as f64 * v).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.p.iter().enumerate().map(|(n, v)| (n * n) as f64 * v).sum()
    }

    pub fn variance(&self) -> f64 {
        self.second_moment() - self.mean().powi(2)
    }

    /// Weight in the last retained Fock state.
    pub fn tail(&self) -> f64 {
        *self.p.last().expect("non-empty")
    }

    pub fn truncation_ok(&self) -> bool {
        self.tail() < TAIL_LIMIT
    }
}

/// `(⟨n²⟩ − ⟨n⟩²)/⟨n⟩ − 1`; `None` for the vacuum.
pub fn mandel_q(dist: &PhotonDistribution) -> Option<f64> {
    let mean = dist.mean();
    if mean <= 1e-12 {
        return None;
    }
    Some(dist.variance() / mean - 1.0)
}

/// Squared statistical overlap `(Σ √(p(n) q(n)))²`. A shorter distribution
/// is padded with zeros.
pub fn sso(a: &PhotonDistribution, b: &PhotonDistribution) -> f64 {
    let overlap: f64 = a.p.iter().zip(&b.p).map(|(x, y)| (x * y).sqrt()).sum();
    (overlap * overlap).min(1.0)
}
