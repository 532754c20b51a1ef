use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("expected {expected} coordinates, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("depth {depth} outside [0, {max}]")]
    DepthOutOfRange { depth: f64, max: usize },
    #[error("coordinate {name} = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
    #[error("negative distance {0}")]
    NegativeDistance(f64),
    #[error("kernel matrix not positive definite at maximum jitter")]
    SingularKernel,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no observations")]
    EmptyData,
    #[error("candidate grid exhausted")]
    GridExhausted,
    #[error("sobol dimension {requested} exceeds table size {available}")]
    SobolDimension { requested: usize, available: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
