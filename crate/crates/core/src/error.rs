use thiserror::Error;

/// Errors raised by estimation, inference and data generation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input violates a documented precondition (bad shapes, non-positive response, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A configuration value is outside its admissible range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A smoothing covariate has zero sample variance.
    #[error("degenerate smoothing covariate in column {column}")]
    DegenerateCovariate { column: usize },

    /// A linear system could not be solved to the required accuracy.
    #[error("{what}: matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    Singular { what: String, condition: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Data generation could not produce an admissible draw.
    #[error("data generation failed: {0}")]
    Generation(String),
}

impl Error {
    /// Whether the error stems from numerics rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Singular { .. } | Error::DegenerateCovariate { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
