//! Answer backends.
//!
//! A [`BackendRequest`] is the wire-ready form of a [`ContextBundle`] plus the
//! question. Every backend answers one request with one response; the
//! request re-checks causality before anything leaves the process.

mod http;
mod mock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::ContextBundle;
use crate::stream::{resolve_frame, FrameRef, PayloadMode};

pub use http::{EndpointConfig, HttpBackend, HttpEmbedder};
pub use mock::{Grounding, GroundingMap, MockBackend, MockDelay};

/// One frame as sent on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub t: f64,
    pub mode: String,
    pub data: String,
}

/// A retrieved chunk as sent on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireChunk {
    pub span: [f64; 2],
    pub frames: Vec<WireFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_new_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self { max_new_tokens: 64 }
    }
}

/// Body of `POST /v1/answer`, plus the query time kept locally for the
/// causality check (it is not serialized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub query_id: String,
    pub question: String,
    pub options: Vec<String>,
    #[serde(rename = "frames")]
    pub recent_frames: Vec<WireFrame>,
    #[serde(rename = "retrieved")]
    pub retrieved_chunks: Vec<WireChunk>,
    #[serde(rename = "gen")]
    pub generation: GenerationParams,
    #[serde(skip)]
    pub query_time_s: f64,
}

impl BackendRequest {
    /// Every frame timestamp in backend order.
    pub fn frame_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.retrieved_chunks
            .iter()
            .flat_map(|c| c.frames.iter())
            .chain(self.recent_frames.iter())
            .map(|f| f.t)
    }

    pub fn context_frame_count(&self) -> usize {
        self.recent_frames.len() + self.retrieved_frame_count()
    }

    pub fn retrieved_frame_count(&self) -> usize {
        self.retrieved_chunks.iter().map(|c| c.frames.len()).sum()
    }

    pub fn check_causality(&self) -> Result<()> {
        match self.frame_times().find(|&t| t > self.query_time_s) {
            Some(t) => Err(Error::Causality {
                frame_t: t,
                query_time_s: self.query_time_s,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub query_id: String,
    pub answer_text: String,
    pub chosen_option: Option<usize>,
    pub ttft_ms: Option<f64>,
    pub token_count: Option<u64>,
    /// Dispatch to first response byte, measured by a wire client. Local only.
    #[serde(skip)]
    pub client_ttft_ms: Option<f64>,
}

impl BackendResponse {
    /// Checks the response against the request it answers.
    pub fn validate_against(&self, request: &BackendRequest) -> Result<()> {
        if self.query_id != request.query_id {
            return Err(Error::backend(
                format!(
                    "response query_id `{}` does not echo `{}`",
                    self.query_id, request.query_id
                ),
                false,
                1,
            ));
        }
        if let Some(c) = self.chosen_option {
            if c >= request.options.len() {
                return Err(Error::backend(
                    format!("chosen_option {c} outside {} options", request.options.len()),
                    false,
                    1,
                ));
            }
        }
        if self.ttft_ms.is_some_and(|t| !(t >= 0.0)) {
            return Err(Error::backend("negative ttft_ms", false, 1));
        }
        Ok(())
    }
}

/// Anything that can answer a [`BackendRequest`]. Implementations must be
/// safe to call from several workers at once.
pub trait Backend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn answer(&self, request: &BackendRequest) -> Result<BackendResponse>;
}

fn wire_frame<T>(frame: &FrameRef<T>, mode: PayloadMode) -> Result<WireFrame> {
    let (mode, data) = resolve_frame(frame, mode)?.to_wire();
    Ok(WireFrame {
        t: frame.timestamp_s,
        mode: mode.to_string(),
        data,
    })
}

/// Serializes a bundle for dispatch; fails on any frame past the query time.
pub fn request_from_bundle<T>(
    query_id: &str,
    question: &str,
    options: &[String],
    bundle: &ContextBundle<T>,
    mode: PayloadMode,
    generation: GenerationParams,
) -> Result<BackendRequest> {
    let recent_frames = bundle
        .recent_frames
        .iter()
        .map(|f| wire_frame(f, mode))
        .collect::<Result<_>>()?;
    let retrieved_chunks = bundle
        .retrieved_chunks
        .iter()
        .map(|c| {
            let frames: Vec<WireFrame> =
                c.frames.iter().map(|f| wire_frame(f, mode)).collect::<Result<_>>()?;
            let span = match (frames.first(), frames.last()) {
                (Some(a), Some(b)) => [a.t, b.t],
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "retrieved chunk {} has no frames attached",
                        c.chunk_id
                    )))
                }
            };
            Ok(WireChunk { span, frames })
        })
        .collect::<Result<_>>()?;
    let request = BackendRequest {
        query_id: query_id.to_string(),
        question: question.to_string(),
        options: options.to_vec(),
        recent_frames,
        retrieved_chunks,
        generation,
        query_time_s: bundle.query_time_s,
    };
    request.check_causality()?;
    Ok(request)
}
