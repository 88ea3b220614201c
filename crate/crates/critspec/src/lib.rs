//! Mean-field critical initialization and optimization-geometry diagnostics
//! for deep MLPs.
//!
//! The crate is organized around seven subsystems:
//!
//! - [`numerics`]: Gauss-Hermite quadrature against the standard Gaussian
//!   measure, singular-value summaries, power iteration, correlation
//!   statistics, and seeded random streams.
//! - [`network`]: fixed-form feed-forward networks with analytic forward
//!   passes, input-output and parameter Jacobians, GLM heads and their
//!   output-layer Hessians, plus a flat binary serialization format.
//! - [`meanfield`]: the pre-activation variance recursion, its fixed point,
//!   the criticality solver, weight-ensemble samplers, and input rescaling.
//! - [`fisher`]: empirical Fisher information (dense and matrix-free), block
//!   spectral-norm bounds, block-Gershgorin eigenvalue localization, the
//!   softmax-Hessian Monte Carlo, and drift tracking during training.
//! - [`ntk`]: the empirical neural tangent kernel via the parameter-by-output
//!   unfolding, and the FIM/NTK spectrum-coincidence check.
//! - [`manifold`]: Stiefel and Oblique geometry (projections, retraction,
//!   exponential map, transports), the orthogonality penalty, and Riemannian
//!   ADAM with scaled manifold parameters.
//! - [`harness`]: configuration, datasets, the experiment driver, and metric
//!   summaries behind the `critspec` CLI.

pub mod fisher;
pub mod harness;
pub mod manifold;
pub mod meanfield;
pub mod network;
pub mod ntk;
pub mod numerics;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimension or index mismatch between inputs.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A computation produced or encountered a non-finite value.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An iterative method ran out of iterations.
    #[error("no convergence: {context} (best estimate {best})")]
    Convergence { context: String, best: f64 },

    /// A solver found no admissible solution.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// A dense representation was requested above the size cap.
    #[error("size cap exceeded: {context} ({requested} > {cap})")]
    SizeCap {
        context: String,
        requested: usize,
        cap: usize,
    },

    /// A precondition on the inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Malformed configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed file contents (network container, dataset record).
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration/usage problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_)
            | Error::SizeCap { .. }
            | Error::InvalidInput(_)
            | Error::Config(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::NonFinite(_) | Error::Convergence { .. } | Error::NoSolution(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
