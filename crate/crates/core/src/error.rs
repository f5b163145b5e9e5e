use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index ({row}, {col}) out of range for a {rows}x{cols} crossbar")]
    Index {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("problem too large: {0}")]
    Size(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("noise model error: {0}")]
    Model(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Index { .. } => "index",
            Error::Geometry(_) => "geometry",
            Error::Params(_) => "params",
            Error::Data(_) => "data",
            Error::Unsupported(_) => "unsupported",
            Error::Size(_) => "size",
            Error::Solver { .. } => "solver",
            Error::Fit(_) => "fit",
            Error::Calibration(_) => "calibration",
            Error::Model(_) => "model",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
