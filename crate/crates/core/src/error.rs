//! Error types shared across the engine.

use thiserror::Error;

/// Node categories used for embeddings, depth heads, and cache keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Passage,
    Entity,
    Fact,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Passage => "passage",
            NodeKind::Entity => "entity",
            NodeKind::Fact => "fact",
        }
    }
}

impl std::fmt::Display for NodeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("curvature mismatch: {a} vs {b}")]
    CurvatureMismatch { a: f64, b: f64 },

    #[error("point on or outside the ball boundary (c*||x||^2 = {c_norm_sq})")]
    BoundaryPoint { c_norm_sq: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("zero vector not allowed for {0}")]
    ZeroVector(&'static str),

    #[error("missing embedding for {kind} '{id}'")]
    MissingEmbedding { kind: NodeKind, id: String },

    #[error("unknown id: {0}")]
    UnknownId(String),

    #[error("transport failure (retryable): {0}")]
    Transport(String),

    #[error("malformed client payload: {msg}; raw: {raw}")]
    MalformedPayload { msg: String, raw: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("corrupt index file {path}: {msg}")]
    CorruptIndex { path: String, msg: String },

    #[error("index format version mismatch: found {found}, supported {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("no trainable passage/fact pairs in corpus")]
    NoTrainablePairs,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EngineError {
    /// Transport failures may be retried; everything else is terminal.
    pub fn is_retryable(&self) -> bool {
        matches!(self, EngineError::Transport(_))
    }
}

pub type Result<T> = std::result::Result<T, EngineError>;
