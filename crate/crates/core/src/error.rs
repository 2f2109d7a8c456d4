use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A perturbative formula was asked to work outside its validity window.
    #[error("validity error: {0}")]
    Validity(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

    /// Input parsed fine but breaks an invariant of the target type.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("numeric error: {message} (best estimate {estimate:e}, achieved relative tolerance {achieved:e})")]
    Numeric {
        message: String,
        estimate: f64,
        achieved: f64,
    },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("fit did not converge: {message}")]
    FitFailed { message: String, trace: Vec<f64> },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
