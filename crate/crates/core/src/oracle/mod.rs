//! Exact model-implied quantities used as oracles.
//!
//! Finite sections are stored time-major: row/column `(t-1)·p + a` holds
//! node `a` at time `t`.

mod identities;
mod local;
mod sections;

pub use identities::{identity_checks, pair_residual_covariance, CheckResult, IdentityReport};
pub use local::{
    fourier_coeff_k, fourier_table, gamma_block, local_spectral_precision, partial_coherence_from_inverse,
    partial_coherence_g_ratio, partial_coherence_stationary_pair, CoherenceCurve, FourierCoefficientTable,
    LocalSpectralMatrix, DEFAULT_QUADRATURE_POINTS,
};
pub use sections::{
    assumption_bounds, boundary_error, covariance_section, precision_entries_tvvar, precision_section_analytic,
    precision_section_bruteforce, rescaled_time, BoundaryError, CovarianceSection, PrecisionKind, PrecisionSection,
    DENSE_LIMIT,
};
