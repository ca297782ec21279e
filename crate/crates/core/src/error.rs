use thiserror::Error;

/// Errors raised by grid construction, kernel building, estimation and selection.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value {value} at node {node} (coordinates {coords:?})")]
    NonFinite { node: usize, coords: Vec<f64>, value: f64 },

    #[error("kernel support overflow: {0}")]
    SupportOverflow(String),

    #[error("invalid structural parameter: {0}")]
    InvalidTheta(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("empty parameter grid")]
    EmptyGrid,

    #[error("bandwidth window is empty: h_min = {h_min} >= h_max = {h_max}")]
    EmptyBandwidthWindow { h_min: f64, h_max: f64 },

    #[error("calibration needs at least {required} replications for delta = {delta}, got {got}")]
    TooFewReplications { required: usize, got: usize, delta: f64 },

    #[error("calibration mismatch: {0}")]
    CalibrationMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid test function: {0}")]
    InvalidFunction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
