use thiserror::Error;

/// Errors produced anywhere in the association-testing pipeline.
#[derive(Debug, Error)]
pub enum RobkatError {
    /// A numeric argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent user input.
    #[error("input error: {0}")]
    Input(String),

    /// A solver failed to converge or produced non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The data admit no meaningful fit (e.g. mostly zero residuals).
    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RobkatError {
    /// True for failures that stem from the numerics rather than the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, RobkatError::Numerical(_) | RobkatError::Degenerate(_))
    }
}

pub type Result<T> = std::result::Result<T, RobkatError>;
