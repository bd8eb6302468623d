//! Least-squares fit of `E(φ) = B + A·cos(π(φ − φ₀))` to a fringe.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{expected_phase_shift, IonCavityParams};

use super::{CoherenceModel, Fringe};

/// Whether the offset `B` is fitted or fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OffsetMode {
    Free,
    Pinned(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub offset: OffsetMode,
    /// Reported `φ₀` lies in `[hint − 1, hint + 1)` (units of π).
    pub phase_hint: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { offset: OffsetMode::Free, phase_hint: 0.5, max_iterations: 50 }
    }
}

impl FitOptions {
    pub fn free(phase_hint: f64) -> Self {
        Self { phase_hint, ..Self::default() }
    }
}

/// Fitted fringe parameters. Phases in units of π.
#[derive(Clone, Debug, PartialEq)]
pub struct FringeFit {
    pub amplitude: f64,
    pub offset: f64,
    pub phase_shift: f64,
    /// `A / B`.
    pub contrast: f64,
    pub offset_pinned: bool,
    pub amplitude_err: f64,
    pub offset_err: f64,
    pub phase_err: f64,
    /// Parameter covariance, order `(B, A, φ₀)`, or `(A, φ₀)` with pinned `B`.
    pub covariance: Vec<Vec<f64>>,
    pub residual_sum_squares: f64,
    pub iterations: usize,
}

impl FringeFit {
    /// Model value at phase `phi` (units of π).
    pub fn eval(&self, phi: f64) -> f64 {
        self.offset + self.amplitude * (PI * (phi - self.phase_shift)).cos()
    }

    pub fn contrast_err(&self) -> f64 {
        let rel_a = if self.amplitude > 0.0 { self.amplitude_err / self.amplitude } else { 0.0 };
        let rel_b = self.offset_err / self.offset;
        self.contrast * (rel_a * rel_a + rel_b * rel_b).sqrt()
    }
}

/// `B0·exp(−Γ_S′ p_P ⟨n⟩ T)` with `p_P = 2g²⟨n⟩/(Γ_D² + Δ²)`.
pub fn recalculated_offset(mean_n: f64, p: &IonCavityParams, coh: &CoherenceModel) -> f64 {
    let b = p.branching();
    let p_excited = 2.0 * p.g * p.g * mean_n / (b.to_d * b.to_d + p.delta_pl * p.delta_pl);
    coh.b0 * (-b.to_s_prime * p_excited * mean_n * p.interaction_time).exp()
}

/// Fit with the offset pinned to [`recalculated_offset`] when a mean photon
/// number is supplied (the branch of `φ₀` is then the one nearest the
/// idealized shift), free otherwise.
pub fn fit_fringe(
    fringe: &Fringe,
    n_mean_hint: Option<f64>,
    p: &IonCavityParams,
    coh: &CoherenceModel,
) -> Result<FringeFit> {
    let opts = match n_mean_hint {
        Some(n) => FitOptions {
            offset: OffsetMode::Pinned(recalculated_offset(n, p, coh)),
            phase_hint: expected_phase_shift(n, p)? / PI,
            ..FitOptions::default()
        },
        None => FitOptions::default(),
    };
    fit_fringe_with(fringe, &opts)
}

/// Gauss–Newton with a numerically differentiated Jacobian, started from the
/// linear least-squares solution in `(B, a cos πφ, b sin πφ)` form.
pub fn fit_fringe_with(fringe: &Fringe, opts: &FitOptions) -> Result<FringeFit> {
    let (x, y) = (fringe.phases(), fringe.p_d());
    let span = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
    let n = x.len();
    if span * n as f64 / (n as f64 - 1.0) < 2.0 - 1e-9 {
        return Err(Error::Degenerate(format!("fringe spans {span}π, less than one period")));
    }
    let spread = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread < 1e-12 {
        return Err(Error::Degenerate("constant fringe".into()));
    }

    let pinned = match opts.offset {
        OffsetMode::Pinned(b) => Some(b),
        OffsetMode::Free => None,
    };
    let model = |theta: &[f64], phi: f64| match pinned {
        Some(b) => b + theta[0] * (PI * (phi - theta[1])).cos(),
        None => theta[0] + theta[1] * (PI * (phi - theta[2])).cos(),
    };

    // Linear start.
    let (c, s): (Vec<f64>, Vec<f64>) = x.iter().map(|&p| ((PI * p).cos(), (PI * p).sin())).unzip();
    let mut theta = match pinned {
        Some(b) => {
            let rows: Vec<Vec<f64>> = (0..n).map(|k| vec![c[k], s[k]]).collect();
            let t: Vec<f64> = y.iter().map(|&v| v - b).collect();
            let ab = linear_lsq(&rows, &t)?;
            vec![ab[0].hypot(ab[1]), ab[1].atan2(ab[0]) / PI]
        }
        None => {
            let rows: Vec<Vec<f64>> = (0..n).map(|k| vec![1.0, c[k], s[k]]).collect();
            let sol = linear_lsq(&rows, y)?;
            vec![sol[0], sol[1].hypot(sol[2]), sol[2].atan2(sol[1]) / PI]
        }
    };

    let residuals = |theta: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(&p, &v)| model(theta, p) - v).collect() };
    let rss = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let np = theta.len();
    let jacobian = |theta: &[f64]| -> Vec<Vec<f64>> {
        let mut jac = vec![vec![0.0; np]; n];
        for j in 0..np {
            let h = 1e-7 * theta[j].abs().max(1.0);
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[j] += h;
            dn[j] -= h;
            for (k, &p) in x.iter().enumerate() {
                jac[k][j] = (model(&up, p) - model(&dn, p)) / (2.0 * h);
            }
        }
        jac
    };

    let mut r = residuals(&theta);
    let mut current = rss(&r);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian(&theta);
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = linear_lsq(&jac, &neg_r)?;
        let mut trial: Vec<f64> = theta.iter().zip(&step).map(|(t, d)| t + d).collect();
        let mut trial_r = residuals(&trial);
        let mut trial_rss = rss(&trial_r);
        // Step halving keeps the iteration monotone.
        let mut scale = 1.0;
        while trial_rss > current && scale > 1e-6 {
            scale *= 0.5;
            trial = theta.iter().zip(&step).map(|(t, d)| t + scale * d).collect();
            trial_r = residuals(&trial);
            trial_rss = rss(&trial_r);
        }
        let small = step.iter().zip(&theta).all(|(d, t)| (scale * d).abs() <= 1e-12 * (1.0 + t.abs()));
        if trial_rss <= current {
            theta = trial;
            r = trial_r;
            let improvement = current - trial_rss;
            current = trial_rss;
            if small || improvement <= 1e-15 * (1.0 + current) {
                converged = true;
                break;
            }
        } else {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(format!("fringe fit after {iterations} iterations")));
    }

    // Canonical sign and branch.
    let (a_idx, p_idx) = if pinned.is_some() { (0, 1) } else { (1, 2) };
    if theta[a_idx] < 0.0 {
        theta[a_idx] = -theta[a_idx];
        theta[p_idx] += 1.0;
    }
    theta[p_idx] = opts.phase_hint + (theta[p_idx] - opts.phase_hint + 1.0).rem_euclid(2.0) - 1.0;

    let jac = jacobian(&theta);
    let dof = n.saturating_sub(np).max(1) as f64;
    let sigma2 = current / dof;
    let covariance: Vec<Vec<f64>> = match invert(&normal_matrix(&jac)) {
        Some(inv) => inv.into_iter().map(|row| row.into_iter().map(|v| v * sigma2).collect()).collect(),
        None => return Err(Error::Degenerate("singular fit Jacobian".into())),
    };
    let err = |i: usize| covariance[i][i].max(0.0).sqrt();

    let (offset, offset_err) = match pinned {
        Some(b) => (b, 0.0),
        None => (theta[0], err(0)),
    };
    if !(offset > 0.0) {
        return Err(Error::Fit(format!("non-positive fringe offset {offset}")));
    }
    let amplitude = theta[a_idx];
    Ok(FringeFit {
        amplitude,
        offset,
        phase_shift: theta[p_idx],
        contrast: amplitude / offset,
        offset_pinned: pinned.is_some(),
        amplitude_err: err(a_idx),
        offset_err,
        phase_err: err(p_idx),
        covariance,
        residual_sum_squares: current,
        iterations,
    })
}

fn normal_matrix(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let np = rows[0].len();
    let mut m = vec![vec![0.0; np]; np];
    for row in rows {
        for i in 0..np {
            for j in 0..np {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    m
}

/// Least-squares solution of `rows · β ≈ y` via the normal equations.
fn linear_lsq(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let np = rows[0].len();
    let m = normal_matrix(rows);
    let mut rhs = vec![0.0; np];
    for (row, &v) in rows.iter().zip(y) {
        for i in 0..np {
            rhs[i] += row[i] * v;
        }
    }
    let inv = invert(&m).ok_or_else(|| Error::Degenerate("singular normal equations".into()))?;
    Ok((0..np).map(|i| (0..np).map(|j| inv[i][j] * rhs[j]).sum()).collect())
}

/// Gauss–Jordan inverse with partial pivoting; `None` when singular.
fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[i][j] -= f * a[col][j];
                        inv[i][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Some(inv)
}
