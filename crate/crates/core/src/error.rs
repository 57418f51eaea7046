use thiserror::Error;

/// Errors raised across the homogenization, training and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmnError {
    #[error("quaternion norm {0:e} is below the degeneracy threshold")]
    DegenerateQuaternion(f64),
    #[error("tensor is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("interface matrix of the laminate is singular")]
    SingularInterfaceMatrix,
    #[error("all network weights are zero")]
    AllWeightsZero,
    #[error("phase {0} carries no weight")]
    PhaseHasNoWeight(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("transfer scaling needs a base volume fraction in (0, 1), got {0}")]
    DegenerateBase(f64),
    #[error("no anchors given for interpolation")]
    NoAnchors,
    #[error("material sampling rejected {rejected} of {drawn} draws")]
    RejectionBudgetExceeded { rejected: usize, drawn: usize },
    #[error("non-finite gradient encountered")]
    NonFiniteGradient,
    #[error("optimization diverged: loss {current:e} exceeds 10x its start {start:e}")]
    Diverged { start: f64, current: f64 },
    #[error("return mapping did not converge after {0} Newton iterations")]
    ReturnMappingDiverged(usize),
    #[error("fixed-point iterations did not converge within {0} iterations")]
    MaxIterationsExceeded(usize),
    #[error("empty sampling: {0}")]
    EmptySampling(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, DmnError>;

impl From<std::io::Error> for DmnError {
    fn from(e: std::io::Error) -> Self {
        DmnError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for DmnError {
    fn from(e: serde_json::Error) -> Self {
        DmnError::Data(e.to_string())
    }
}

impl From<csv::Error> for DmnError {
    fn from(e: csv::Error) -> Self {
        DmnError::Data(e.to_string())
    }
}
