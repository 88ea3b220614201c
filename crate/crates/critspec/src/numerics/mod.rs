//! Shared numerical kernels: quadrature against the standard Gaussian
//! measure, singular-value and eigenvalue summaries, power iteration for
//! matrix-free operators, correlation statistics, and seeded randomness.

mod quadrature;
mod rng;
mod spectral;
mod stats;

pub use quadrature::{gauss_expect, QuadratureRule};
pub use rng::RngStream;
pub use spectral::{
    operator_spectral_norm, power_iteration_max_eig, spectral_summary, spectral_summary_with,
    SpectralSummary, SvNormalization,
};
pub use stats::pearson;
