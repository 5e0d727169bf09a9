use thiserror::Error;

/// Errors surfaced by model construction, simulation and the verification
/// harnesses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: operands live on different grids")]
    GridMismatch,

    #[error("model configuration: {0}")]
    ModelConfig(String),

    /// The mean operator is not a contraction, so the resolvent series
    /// diverges.
    #[error("operator norm {norm:.6} >= 1: Neumann inverse unavailable")]
    NotContractive { norm: f64 },

    #[error("convergence failure: {0}")]
    Convergence(String),

    /// A CLT probe whose target variance vanishes while samples do not.
    #[error("degenerate probe: {0}")]
    DegenerateProbe(String),
}

pub type Result<T> = std::result::Result<T, Error>;
