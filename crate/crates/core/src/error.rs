use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("SVD failed to converge after {iterations} sweeps")]
    NoConvergence { iterations: usize },

    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("degenerate channel: numerical rank {rank} < {required}")]
    DegenerateChannel { rank: usize, required: usize },

    #[error("channel estimation failed: {0}")]
    Estimation(String),

    #[error("calibration failed: best pair deviates by {best_deviation:.3} dB\n{report}")]
    Calibration { best_deviation: f64, report: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error at line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable identifier, printed by the CLI on failure.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "E_SHAPE",
            Error::NonFinite => "E_NONFINITE",
            Error::NoConvergence { .. } => "E_NOCONVERGE",
            Error::Config { .. } => "E_CONFIG",
            Error::DegenerateChannel { .. } => "E_DEGENERATE",
            Error::Estimation(_) => "E_ESTIMATION",
            Error::Calibration { .. } => "E_CALIBRATION",
            Error::Io { .. } => "E_IO",
            Error::Parse { .. } => "E_PARSE",
        }
    }
}
