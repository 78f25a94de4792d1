use thiserror::Error;

pub type Result<T, E = SanError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SanError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape {shape:?} for {op}: {reason}")]
    Shape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate attention: every position of a slice is masked ({0})")]
    FullyMasked(&'static str),

    #[error("loss is not a scalar (shape {0:?})")]
    NonScalarLoss(Vec<usize>),

    #[error("index {index} out of range for {what} of size {size}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("unknown label {label:?}")]
    UnknownLabel { label: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("label set mismatch: model has {model:?}, data has {data:?}")]
    LabelSetMismatch { model: Vec<String>, data: Vec<String> },

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint tensor {name:?} has shape {found:?}, expected {expected:?}")]
    CheckpointShape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("checkpoint payload truncated: expected {expected} bytes, found {found}")]
    CheckpointTruncated { expected: usize, found: usize },

    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SanError {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        SanError::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn shape(op: &'static str, shape: &[usize], reason: impl Into<String>) -> Self {
        SanError::Shape {
            op,
            shape: shape.to_vec(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by malformed input files rather than configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            SanError::Parse { .. }
                | SanError::UnknownLabel { .. }
                | SanError::LabelSetMismatch { .. }
                | SanError::Io(_)
                | SanError::Json(_)
                | SanError::CheckpointVersion { .. }
                | SanError::CheckpointShape { .. }
                | SanError::CheckpointTruncated { .. }
                | SanError::CheckpointFormat(_)
        )
    }
}
