use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point ({x}, {y}) lies outside the FoV grid")]
    OutOfGrid { x: f64, y: f64 },

    #[error("FoV index {index} out of range for {n_fov} FoVs")]
    FovOutOfRange { index: usize, n_fov: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("invalid scheme combination: {0}")]
    InvalidScheme(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
