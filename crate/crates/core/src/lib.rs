//! Nonstationary graphical models for multivariate time series.
//!
//! The crate covers the whole pipeline:
//!
//! * [`model`] — time-varying VAR specifications, simulation and the
//!   ground-truth graph implied by the coefficients;
//! * [`oracle`] — exact covariances, inverse covariances, local spectral
//!   precision and finite-section checks of the operator identities;
//! * [`spectral`] — DFTs, the dual-frequency precision matrix `K_n` and its
//!   locally stationary prediction;
//! * [`regress`] — node-wise complex lasso regressions on DFT values;
//! * [`select`] — weight matrices, attributed graph selection and scoring.
//!
//! Conventions: node indices are zero-based in the API; time indices `t`
//! and Fourier indices `k` are one-based, as on the lattice `1..=n` with
//! rescaled time `u_t = (t-1)/(n-1)` and frequencies `ω_k = 2πk/n`. Files and
//! the CLI use one-based labels throughout.

pub mod cli;
pub mod error;
pub mod model;
pub mod oracle;
pub mod regress;
pub mod report;
pub mod select;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
