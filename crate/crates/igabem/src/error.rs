use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {value} outside knot interval [{a}, {b}]")]
    OutOfDomain { value: f64, a: f64, b: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("singularity extraction failed: {0}")]
    Extraction(String),

    #[error("evaluation at the singular point; use the limit value instead")]
    SingularEvaluation,

    #[error("solver error: {0}")]
    Solver(String),

    #[error("near-field evaluation refused: {0}")]
    NearField(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
