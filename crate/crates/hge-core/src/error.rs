use thiserror::Error;

/// Errors raised by the gradient-extraction pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HgeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid perturbation plan: {0}")]
    InvalidPlan(String),

    #[error("trace mismatch: {0}")]
    TraceMismatch(String),

    #[error("empty trace")]
    EmptyTrace,

    #[error("window spans {cycles} cycles of {freq_hz} Hz, which is not an integer")]
    NonIntegerCycles { freq_hz: f64, cycles: f64 },

    #[error("frequency {freq_hz} Hz is not below the Nyquist frequency {nyquist_hz} Hz")]
    AboveNyquist { freq_hz: f64, nyquist_hz: f64 },

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, HgeError>;
