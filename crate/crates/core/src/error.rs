use std::path::PathBuf;

use thiserror::Error;

use crate::data::{Span, TrajId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed JSON. The underlying error carries line and column.
    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// A record parsed but violates a schema constraint.
    #[error("video {video}: {field}: {message}")]
    Schema {
        video: String,
        field: String,
        message: String,
    },

    #[error("video {video}: relation references unknown trajectory id {id}")]
    DanglingId { video: String, id: TrajId },

    #[error("video {video}: {what} span [{}, {}) lies outside [0, {frame_count})", span.begin, span.end)]
    SpanOutOfRange {
        video: String,
        what: String,
        span: Span,
        frame_count: u32,
    },

    #[error("video {video}: prediction #{index} has no score")]
    MissingScore { video: String, index: usize },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("loss must be a 1x1 tensor, got {0:?}")]
    NonScalarLoss((usize, usize)),

    #[error("trajectories {subject} and {object} do not overlap in time")]
    NoOverlap { subject: TrajId, object: TrajId },

    #[error("intersection of {len} frames is shorter than {k} sectors")]
    DegenerateGrid { len: u32, k: usize },

    #[error("predicate index {index} out of range for a vocabulary of {size}")]
    PredicateOutOfRange { index: usize, size: usize },

    #[error("cost input must satisfy 0 < s < l <= L (got L={big_l}, l={l}, s={s})")]
    CostConstraint { big_l: u64, l: u64, s: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },

    #[error("missing labels: {0}")]
    MissingLabels(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("feature provider: {0}")]
    Features(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(
        video: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Schema {
            video: video.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by configuration rather than input data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::CostConstraint { .. })
    }
}
