use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} outside [1, {n}]")]
    Index { index: usize, n: usize },

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("system is not hyperbolic: {0}")]
    NotHyperbolic(String),

    #[error("degenerate ratio: {0}")]
    DegenerateRatio(String),

    #[error("requested time {requested} is at or beyond blow-up time {blowup}")]
    BlowUp { requested: f64, blowup: f64 },

    #[error("numerical overflow after t = {last_valid_t}")]
    NumericalOverflow { last_valid_t: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("integration singularity: {0}")]
    Singularity(String),
}

pub type Result<T> = std::result::Result<T, FlowError>;
