use std::fmt;

use thiserror::Error;

/// One itemized problem found while loading or validating a benchmark.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Finding {
    pub question_id: Option<String>,
    pub kind: FindingKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    DuplicateId,
    GoldOutOfRange,
    MissingGold,
    UnmappedTrack,
    UnknownTrack,
    NegativeQueryTime,
    MalformedTime,
    QueryBeyondDuration,
    MalformedRecord,
    /// Item belongs to a track this harness does not evaluate.
    OutOfScope,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.question_id {
            Some(id) => write!(f, "[{:?}] {}: {}", self.kind, id, self.message),
            None => write!(f, "[{:?}] {}", self.kind, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cannot resolve frame `{locator}`: {reason}")]
    Resolution { locator: String, reason: String },

    #[error("index build failed: {0}")]
    IndexBuild(String),

    #[error("degenerate embedding for chunk {chunk_id}: member embeddings sum to zero")]
    DegenerateEmbedding { chunk_id: usize },

    #[error("no frame observed at or before t={query_time_s}s")]
    NoObservation { query_time_s: f64 },

    #[error("no grounding entry for question `{0}`")]
    GroundingMissing(String),

    #[error("backend error after {attempts} attempt(s) (retryable: {retryable}): {message}")]
    Backend {
        message: String,
        retryable: bool,
        attempts: u32,
    },

    #[error("causality violation: frame at t={frame_t}s sent for query at t={query_time_s}s")]
    Causality { frame_t: f64, query_time_s: f64 },

    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("validation failed with {} finding(s):\n{}", .0.len(), join_findings(.0))]
    Validation(Vec<Finding>),

    #[error("no samples to report")]
    NoSamples,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_findings(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(|f| format!("  {f}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub(crate) fn backend(message: impl Into<String>, retryable: bool, attempts: u32) -> Self {
        Error::Backend {
            message: message.into(),
            retryable,
            attempts,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
