//! Simulation and inference toolkit for a trapped ion dispersively coupled to
//! an optical cavity.
//!
//! The ion's Ramsey fringes pick up a photon-number-dependent AC-Stark shift
//! and lose contrast through photon-number fluctuations. This crate models the
//! ion–cavity system with a Lindblad master equation, synthesizes and fits the
//! fringes, and reconstructs the intracavity photon-number distribution by
//! maximum likelihood over a coherent-plus-thermal drive model.
//!
//! The numerical core ([`linalg`], [`quantum`], [`lindblad`], [`optimize`]) is
//! generic over [`Real`] (`f32` or `f64`); the physics layers work in `f64`.
//! All rates and detunings are angular frequencies in rad/s.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod linalg;
pub mod lindblad;
pub mod model;
pub mod optimize;
pub mod quantum;
pub mod ramsey;
pub mod reconstruction;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use num_complex::Complex;

/// Double-precision aliases used throughout the physics layers.
pub type C64 = num_complex::Complex<f64>;
pub type CMatrix64 = linalg::CMatrix<f64>;
pub type Operator64 = quantum::Operator<f64>;
pub type DensityMatrix64 = quantum::DensityMatrix<f64>;
pub type LindbladGenerator64 = lindblad::LindbladGenerator<f64>;

/// Single-precision aliases.
pub type CMatrix32 = linalg::CMatrix<f32>;
pub type Operator32 = quantum::Operator<f32>;
pub type DensityMatrix32 = quantum::DensityMatrix<f32>;
pub type LindbladGenerator32 = lindblad::LindbladGenerator<f32>;

/// `2π`, for converting ordinary frequencies to angular ones.
pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Converts an ordinary frequency in MHz to an angular frequency in rad/s.
pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

/// Converts an ordinary frequency in kHz to an angular frequency in rad/s.
pub fn khz(f: f64) -> f64 {
    TWO_PI * f * 1e3
}
