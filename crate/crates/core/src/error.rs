use thiserror::Error;

/// Unified error type for the numeric core.
///
/// Parameters are reported as `f64` regardless of the scalar type the
/// computation ran at.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid beta shape parameters alpha={alpha}, beta={beta} (must be finite and > 0)")]
    InvalidShape { alpha: f64, beta: f64 },

    #[error("selection count k={k} out of range for n={n} annotators")]
    CountOutOfRange { k: u32, n: u32 },

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("invalid accuracy curve: {0}")]
    InvalidCurve(String),

    #[error("invalid parameter {name}: {message}")]
    InvalidParam { name: &'static str, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("annotation records are ragged: expected n={expected}, found n={found}")]
    RaggedAnnotations { expected: u32, found: u32 },

    #[error("per-annotator draws required but absent on at least one record")]
    MissingDraws,

    #[error("histogram bin {bin} exhausted: short by {deficit} items")]
    BinExhausted { bin: usize, deficit: usize },

    #[error("source density is zero at observed count k={k}")]
    ZeroDensity { k: u32 },

    #[error("no source items share any frequency bucket with the target (first empty bucket k={k})")]
    EmptyBucket { k: u32 },

    #[error("need {needed} annotators per item, only {available} available")]
    InsufficientAnnotations { needed: u32, available: u32 },

    #[error("estimator needs at least {needed} annotators, got {available}")]
    InsufficientAnnotators { needed: usize, available: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("least-squares system is ill-conditioned (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("quadrature failed to reach tolerance {tol:.3e} (error estimate {estimate:.3e})")]
    QuadratureFailure { estimate: f64, tol: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}
