use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid extrinsics: {0}")]
    InvalidExtrinsics(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    NumericalFailure { iteration: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("camera {camera}: {source}")]
    Camera {
        camera: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateGeometry(msg.into())
    }

    /// Wraps the error with the id of the camera it belongs to.
    pub fn for_camera(self, camera: impl Into<String>) -> Self {
        Error::Camera {
            camera: camera.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping camera tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Camera { source, .. } => source.root(),
            other => other,
        }
    }
}
