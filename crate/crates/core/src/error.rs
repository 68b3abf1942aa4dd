use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("registration did not converge: {0}")]
    Convergence(String),

    #[error("insufficient overlap: {found:.3} < {required:.3}")]
    Overlap { found: f64, required: f64 },

    #[error("degenerate map: {0}")]
    DegenerateMap(String),

    #[error("degenerate loss: the mask selects no samples")]
    DegenerateLoss,

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("registration failed: {0}")]
    Registration(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
