use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid state: eigenvalue {eigenvalue:.3e} below tolerance")]
    InvalidState { eigenvalue: f64 },

    #[error("minimizer failure: discord {discord:.3e} is negative, optimum was missed")]
    MinimizerFailure { discord: f64 },

    #[error("resource error: {0}")]
    Resource(String),

    #[error("type error: {0}")]
    Type(String),

    #[error("fit failure: {0}")]
    FitFailure(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::InvalidState { .. } => "invalid_state",
            Error::MinimizerFailure { .. } => "minimizer_failure",
            Error::Resource(_) => "resource",
            Error::Type(_) => "type",
            Error::FitFailure(_) => "fit_failure",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
