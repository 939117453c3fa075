use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("toolpath error: {0}")]
    Toolpath(String),

    #[error("simulation diverged at t = {time:.6} s (sub-step {substep}, element {element}): {detail}")]
    NonFinite {
        time: f64,
        substep: usize,
        element: usize,
        detail: String,
    },

    #[error("activation error: {0}")]
    Activation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI's structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InvalidGeometry(_) => "invalid_geometry",
            Error::Toolpath(_) => "toolpath",
            Error::NonFinite { .. } => "non_finite",
            Error::Activation(_) => "activation",
            Error::Shape(_) => "shape",
            Error::Metric(_) => "metric",
            Error::Format(_) => "format",
            Error::Training(_) => "training",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
