use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("row {row} out of range for sketch width {k}")]
    RowOutOfRange { row: usize, k: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sketch configurations differ: {0}")]
    ConfigMismatch(String),

    #[error("non-finite quantity {0}")]
    NonFinite(f64),

    #[error("fixed-point accumulator overflow")]
    Overflow,

    #[error("total weight {0} is not positive; frequencies are undefined")]
    NonPositiveTotal(f64),

    #[error("malformed sketch bytes: {0}")]
    Malformed(String),

    #[error("unsupported sketch format version {0}")]
    Version(u16),

    #[error("negative accumulated count {count} for item {item}")]
    NegativeCount { item: String, count: f64 },

    #[error("series did not converge: {0}")]
    NonConvergence(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
