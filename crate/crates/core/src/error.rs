use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate quaternion: norm {norm}")]
    DegenerateQuaternion { norm: f64 },

    #[error("scale component {axis} must be positive, got {value}")]
    NonPositiveScale { axis: usize, value: f64 },

    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("frame index {t} out of range (valid: 0..{limit})")]
    FrameOutOfRange { t: usize, limit: usize },

    #[error("query ({x}, {y}) at frame {t} is outside the image or the clip")]
    InvalidQuery { t: usize, x: f64, y: f64 },

    #[error("non-finite value in parameter group `{group}` at iteration {iteration}")]
    NumericalFailure {
        group: &'static str,
        iteration: usize,
    },

    #[error("blob {blob} is behind the camera at frame {frame}")]
    BlobBehindCamera { blob: usize, frame: usize },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
