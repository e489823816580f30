use thiserror::Error;

/// Errors surfaced by state construction, schedule validation, protocol
/// assembly and trajectory execution.
#[derive(Error, Debug)]
pub enum QecError {
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator is not hermitian (max |M - M\u{2020}| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not unitary (max |U\u{2020}U - I| = {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("invalid schedule: {0}")]
    ScheduleInvalid(String),

    #[error("invalid protocol configuration: {0}")]
    ProtocolInvalid(String),

    #[error("estimator domain error: {0}")]
    EstimatorDomain(String),

    #[error("numerical fault: {0}")]
    NumericalFault(String),

    #[error("linear algebra backend failure: {0}")]
    Backend(String),
}

pub type Result<T> = std::result::Result<T, QecError>;
