use thiserror::Error;

/// Errors raised by the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent configuration (integrator, Welch, scenario).
    #[error("configuration error: {0}")]
    Config(String),

    /// A configuration file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The integrated state became non-finite or ran away.
    #[error("numerical divergence at step {step}: {detail}")]
    Divergence { step: u64, detail: String },

    /// An iterative numerical procedure failed to converge.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Regression could not be performed on the supplied scatter.
    #[error("fit error: {0}")]
    Fit(String),

    /// The measurement protocol could not produce a result.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A stored container or table is malformed.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
