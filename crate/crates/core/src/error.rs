use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate mesh: triangle {triangle} has area {area:e} m^2")]
    DegenerateMesh { triangle: usize, area: f64 },

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("eigensolver did not converge (max relative residual {residual:e}): {detail}")]
    Solver { residual: f64, detail: String },

    #[error("point ({x}, {y}) lies outside the mesh")]
    OutOfDomain { x: f64, y: f64 },

    #[error("non-finite value at bin {bin}: {detail}")]
    Numeric { bin: usize, detail: String },

    #[error("numeric overflow at sample {sample}")]
    Overflow { sample: usize },

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the numerical machinery (as opposed to bad input or I/O).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateMesh { .. }
                | Error::IllConditioned(_)
                | Error::Solver { .. }
                | Error::Numeric { .. }
                | Error::Overflow { .. }
                | Error::Diverged { .. }
        )
    }
}
