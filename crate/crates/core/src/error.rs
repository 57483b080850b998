use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    /// The relative rotation between two states is too close to pi for the
    /// error coordinates to be defined.
    #[error("relative rotation angle {0:.6} rad is outside the error chart")]
    OutOfChart(f64),

    #[error("point is behind the camera (depth {0:.4} m)")]
    BehindCamera(f64),

    #[error("IMU stream must contain at least two samples with increasing timestamps")]
    EmptyImuStream,

    #[error("triangulation failed: {0}")]
    Triangulation(&'static str),

    #[error("config line {line}: {msg}")]
    ConfigLine { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
