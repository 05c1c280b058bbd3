//! Error type shared by every module in the crate.

/// Errors produced by batch construction, estimators, bound evaluation and
/// the fitting loop.
///
/// Bound inapplicability (a violated premise such as `mu_x <= c_x`) is *not*
/// an error; it is reported as a first-class `None` result by the bound
/// functions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An operation that needs at least one sample received none.
    #[error("empty batch: {0}")]
    EmptyBatch(&'static str),

    /// A NaN or infinity reached a place that admits only finite reals.
    #[error("non-finite input in {context}: {value}")]
    NonFiniteInput { context: &'static str, value: f64 },

    /// X-scale normalizer must be finite and strictly positive.
    #[error("invalid normalizer: {0} (must be finite and > 0)")]
    InvalidNormalizer(f64),

    /// Deviation order outside the supported set {1, 2}.
    #[error("unsupported L_p order: {0} (supported: 1, 2)")]
    UnsupportedOrder(u32),

    /// A matrix decomposition failed.
    #[error("numerical failure: {0}")]
    NumericalFailure(&'static str),

    /// Dimension mismatch between model, proposal or observation.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeError {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Batch layout violates an estimator precondition
    /// (odd antithetic batch, block size not dividing the batch, ...).
    #[error("invalid batch spec: {0}")]
    InvalidBatchSpec(String),

    /// The requested pipeline needs exact log-evidence the model cannot supply.
    #[error("oracle unavailable: {0}")]
    OracleUnavailable(&'static str),

    /// Negative dispersion constant passed to a bound.
    #[error("invalid dispersion constant: {0} (must be >= 0)")]
    InvalidDispersion(f64),

    /// Non-positive evidence passed to the corollary bound.
    #[error("invalid evidence: {0} (must be > 0)")]
    InvalidEvidence(f64),

    /// The fit objective fell more than the divergence budget below its
    /// starting value.
    #[error("divergence detected at step {step}: objective {objective} fell below initial {initial} by more than {budget} nats")]
    DivergenceDetected {
        step: usize,
        objective: f64,
        initial: f64,
        budget: f64,
    },

    /// Figure input does not meet the minimum data requirements.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
