use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The instance document could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A parsed or constructed value violates a model invariant.
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    /// A computed quantity fell outside its admissible range by more than
    /// rounding can explain.
    #[error("internal consistency error: {0}")]
    Consistency(String),

    /// Numerical breakdown (degenerate denominator, non-finite value).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An iterative solver failed to bracket or converge.
    #[error("solver error: {0}")]
    Solver(String),

    /// The requested computation exceeds a size guard.
    #[error("capacity error: {0}")]
    Capacity(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: msg.into(),
        }
    }
}
