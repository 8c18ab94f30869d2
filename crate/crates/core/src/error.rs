use thiserror::Error;

/// Errors produced by the stochastic-profiling library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("parameter on the simplex boundary: {0}")]
    Boundary(String),

    #[error("composition count {count} exceeds the cap of {cap} (n = {n}, T = {populations})")]
    CompositionCap {
        count: u128,
        cap: usize,
        n: usize,
        populations: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular Hessian (condition number {condition:.3e})")]
    SingularHessian { condition: f64 },

    #[error("objective is not finite at any of the {draws} grid draws")]
    AllInfinite { draws: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
