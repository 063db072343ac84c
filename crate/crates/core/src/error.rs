use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid probability law: {0}")]
    InvalidLaw(String),

    #[error("invalid A-measure: {0}")]
    InvalidMeasure(String),

    #[error("empty stream")]
    EmptyStream,

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("covariance factorization needs jitter above {max_jitter:e}")]
    Factorization { max_jitter: f64 },

    #[error("spectral decomposition failed: {0}")]
    Spectrum(String),

    /// The Smirnov series could not be certified; callers fall back to Monte Carlo.
    #[error("spectral CDF declined: {0}")]
    Declined(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_declined(&self) -> bool {
        matches!(self, Error::Declined(_))
    }
}
