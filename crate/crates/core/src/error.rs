use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("factorization failed at pivot {pivot}")]
    FactorizationFailure { pivot: usize },

    #[error("non-finite values in time step {step}")]
    Instability { step: usize },

    #[error("inner projection did not converge after {iterations} iterations (residual ratio {ratio:e})")]
    NoConvergence { iterations: usize, ratio: f64 },

    #[error("degenerate search direction: {0}")]
    DegenerateDirection(String),

    #[error("configuration error on line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Process exit status for this error: 2 non-convergence, 3 instability, 4 configuration, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config { .. } => 4,
            Error::Instability { .. } => 3,
            Error::NoConvergence { .. } | Error::DegenerateDirection(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            Error::Config { line: 1, message: String::new() }.exit_code(),
            Error::Instability { step: 3 }.exit_code(),
            Error::NoConvergence { iterations: 1, ratio: 1.0 }.exit_code(),
            Error::Io(String::new()).exit_code(),
        ];
        assert_eq!(codes, [4, 3, 2, 1]);
    }
}
