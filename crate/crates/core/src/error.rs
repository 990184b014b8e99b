//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid caller input (shape mismatch, non-finite data, bad flag
    /// combination on a value level).
    #[error("invalid input: {0}")]
    Input(String),

    /// Configuration that is well-formed but unsupported, e.g. a
    /// sketched run of an algorithm that needs the dense iterate.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An iterative routine ran out of its budget. Carries the best
    /// residuals seen so the caller can decide whether to accept them.
    #[error("{routine} did not converge within {iterations} iterations (best residuals {residuals:?})")]
    Convergence {
        routine: &'static str,
        iterations: usize,
        residuals: Vec<f64>,
    },

    /// A numerical failure that is not a simple budget problem.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Certificate-level failure, e.g. requesting a growth constant
    /// when strict complementarity does not hold.
    #[error("certificate error: {0}")]
    Certificate(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed instance file; names the offending field.
    #[error("parse error in {field}: {message}")]
    Parse { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }
}
