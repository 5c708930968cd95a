use thiserror::Error;

/// Errors raised by the library. Every variant carries enough context to be
/// reported to a user without a backtrace.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field is in {found} representation, expected {expected}")]
    WrongRepresentation {
        expected: &'static str,
        found: &'static str,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("exponent p = {0} is outside (1, inf)")]
    InvalidExponent(f64),

    #[error("oversample factor must be at least 1")]
    InvalidOversample,

    #[error("frequency content reaches the Nyquist limit: {0}")]
    Nyquist(String),

    #[error("invalid multi-index: {0}")]
    InvalidMultiIndex(String),

    #[error("invalid derivative family: {0}")]
    InvalidFamily(String),

    #[error("odd order |beta| = {0}: the symbol is not even")]
    OddOrder(u32),

    #[error("zero denominator: {0}")]
    ZeroDenominator(String),

    #[error("frequency collision: {0}")]
    FrequencyCollision(String),

    #[error("invalid martingale: {0}")]
    InvalidMartingale(String),

    #[error("sign sampling is degenerate: {0}")]
    DegenerateSignGrid(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("size limit exceeded: {0}")]
    TooLarge(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("parse error at {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
