use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box ({x}, {y}, {w}, {h}): width and height must be positive and finite")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("rotation angle {angle} is too close to pi for a unique logarithm")]
    BranchAmbiguity { angle: f64 },

    #[error("frame {got} is not after the previous frame {previous}")]
    FrameOrder { previous: u32, got: u32 },

    #[error("detection belongs to frame {got}, expected frame {expected}")]
    FrameMismatch { expected: u32, got: u32 },

    #[error("descriptor has zero norm after weighting")]
    DegenerateDescriptor,

    #[error("ground truth is empty; MOTA is undefined")]
    EmptyGroundTruth,

    #[error("infeasible scene: {0}")]
    InfeasibleScene(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed descriptor file: {0}")]
    DescriptorFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
