use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trial function too close to a node at evaluation point (|psi| = {psi_abs:.3e} < {threshold:.3e})")]
    NodeProximity { psi_abs: f64, threshold: f64 },

    #[error("degenerate node: spatial gradient vanishes (|grad| = {grad_norm:.3e})")]
    DegenerateNode { grad_norm: f64 },

    #[error("walker population went extinct (all walkers exited)")]
    Extinction,

    #[error("bisection could not reach the exit tolerance after {iterations} iterations")]
    BisectionStalled { iterations: usize },

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("energy history does not decay (slope z-score {z:.2}); check lambda or the domain setup")]
    NonDecayingHistory { z: f64 },

    #[error("normalization <psi_I>_eta is consistent with zero (z = {z:.2}); gradient ratio ill-conditioned")]
    IllConditionedNormalization { z: f64 },

    #[error("shift {lambda} is not below the groundstate energy {energy}")]
    SpectralShift { lambda: f64, energy: f64 },

    #[error("oracle iteration failed to converge: {0}")]
    OracleStagnation(String),

    #[error("empty domain mask on the grid")]
    EmptyMask,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
