use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

/// Failures surfaced by the laboratory.
///
/// The variants map onto the CLI exit codes: configuration-style errors
/// (`InvalidResolution`, `InvalidParameter`, `InvalidArgument`, `Config`,
/// `Dimension`) exit with 2, the numerical ones with 3.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("numerical failure: {message}")]
    NumericalFailure {
        message: String,
        condition: Option<f64>,
    },

    #[error("step size error: {0}")]
    StepSize(String),

    #[error("state corruption: {0}")]
    StateCorruption(String),

    #[error("state error: {0}")]
    State(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LabError {
    pub fn numerical(message: impl Into<String>) -> Self {
        LabError::NumericalFailure {
            message: message.into(),
            condition: None,
        }
    }

    pub fn ill_conditioned(message: impl Into<String>, condition: f64) -> Self {
        LabError::NumericalFailure {
            message: message.into(),
            condition: Some(condition),
        }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            LabError::InvalidResolution(_)
                | LabError::InvalidParameter(_)
                | LabError::InvalidArgument(_)
                | LabError::Dimension { .. }
                | LabError::Config(_)
        )
    }
}
