use thiserror::Error;

/// Errors produced by the tail-index toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. `x < 1`).
    #[error("domain error: {0}")]
    Domain(String),

    /// A constructor rejected its parameters.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The moment-bound table has no row for a finite nonzero marginal index.
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    /// The sampler could not find a finite-likelihood starting state.
    #[error("MCMC initialisation failed after {attempts} attempts")]
    InitFailure { attempts: usize },

    /// The KL tail bound could not be made small on a finite window.
    #[error("KL divergence integral diverges: {0}")]
    Divergent(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// `true` for failures of a numerical procedure rather than of the input.
    pub fn is_numeric_failure(&self) -> bool {
        matches!(self, Error::InitFailure { .. } | Error::Divergent(_))
    }

    /// `true` for errors caused by a bad configuration or argument.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Json(_)
                | Error::Parse(_)
                | Error::InvalidParameter(_)
                | Error::Domain(_)
                | Error::UnsupportedRegime(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
