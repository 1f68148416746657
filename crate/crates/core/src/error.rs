use std::path::PathBuf;

/// Errors produced by the simulator library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("line {line}: field `{field}` has {found} entries, expected {expected}")]
    LengthMismatch {
        line: usize,
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: field `conf` entry {layer} is {value}, outside [0, 1]")]
    ConfidenceOutOfRange { line: usize, layer: usize, value: f64 },

    #[error("line {line}: duplicate sample id `{id}`")]
    DuplicateId { line: usize, id: String },

    #[error("trace is empty: missing header line")]
    MissingHeader,

    #[error("a split decision needs at least 2 layers, got {0}")]
    TooFewLayers(usize),

    #[error("layer {layer} is outside 1..={layers}")]
    LayerOutOfRange { layer: usize, layers: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset has {samples} samples but the bandit needs at least {layers} for initialization")]
    DatasetTooSmall { samples: usize, layers: usize },

    #[error("arm {arm} has never been observed; round-robin initialization must come first")]
    NotInitialized { arm: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid policy `{0}` (expected splitee, splitee-s, final-exit, random-exit, fixed:<layer> or cascade)")]
    InvalidPolicy(String),

    #[error("run lengths differ: {expected} vs {found} rounds")]
    MismatchedHorizon { expected: usize, found: usize },

    #[error("trace file not found: {}", .0.display())]
    TraceNotFound(PathBuf),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
