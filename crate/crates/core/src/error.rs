use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("start point ({x}, {y}) lies in the elliptic region")]
    InvalidStart { x: f64, y: f64 },

    #[error("negative radicand at x = {x} during characteristic step; refine the step")]
    StepFailure { x: f64 },

    #[error("no apex m < {a} whose characteristic reaches ({a}, -{b})")]
    NoApex { a: f64, b: f64 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("path leaves the field support at ({x}, {y})")]
    InvalidPath { x: f64, y: f64 },

    #[error("coefficient {what} undefined at ({x}, {y})")]
    UndefinedCoefficient { what: &'static str, x: f64, y: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
