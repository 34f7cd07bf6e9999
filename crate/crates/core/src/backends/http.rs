use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendRequest, BackendResponse};
use crate::embed::{Embedder, QueryText};
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};
use crate::stream::{resolve_frame, FrameRef, PayloadMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL, e.g. `http://127.0.0.1:8000`.
    pub url: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub max_in_flight: usize,
    pub frame_mode: PayloadMode,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8000".into(),
            timeout_ms: 60_000,
            retries: 2,
            max_in_flight: 4,
            frame_mode: PayloadMode::Ref,
        }
    }
}

impl EndpointConfig {
    fn endpoint(&self, path: &str) -> String {
        format!("{}{path}", self.url.trim_end_matches('/'))
    }

    fn client(&self) -> Result<reqwest::blocking::Client> {
        if self.max_in_flight == 0 {
            return Err(Error::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(self.timeout_ms))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("http client: {e}")))
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct GateGuard<'a>(&'a Gate);

impl Gate {
    fn new(slots: usize) -> Self {
        Self {
            free: Mutex::new(slots),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().expect("gate poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate poisoned");
        }
        *free -= 1;
        GateGuard(self)
    }
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate poisoned") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Deserialize)]
struct AnswerBody {
    query_id: String,
    answer_text: String,
    #[serde(default)]
    chosen_option: Option<usize>,
    #[serde(default)]
    ttft_ms: Option<f64>,
    #[serde(default)]
    token_count: Option<u64>,
}

/// POSTs JSON and returns `(body, ms to response headers)`, retrying on
/// transport errors and 5xx.
fn post_json<B: Serialize>(
    client: &reqwest::blocking::Client,
    url: &str,
    body: &B,
    retries: u32,
) -> Result<(Vec<u8>, f64)> {
    let mut last = None;
    for attempt in 1..=retries + 1 {
        let t0 = Instant::now();
        match client.post(url).json(body).send() {
            Ok(resp) => {
                let first_byte_ms = t0.elapsed().as_secs_f64() * 1e3;
                let status = resp.status();
                if status.is_server_error() {
                    last = Some(Error::backend(format!("{url}: HTTP {status}"), true, attempt));
                    continue;
                }
                if !status.is_success() {
                    return Err(Error::backend(format!("{url}: HTTP {status}"), false, attempt));
                }
                let bytes = resp
                    .bytes()
                    .map_err(|e| Error::backend(format!("{url}: reading body: {e}"), true, attempt))?;
                return Ok((bytes.to_vec(), first_byte_ms));
            }
            Err(e) => {
                let retryable = e.is_timeout() || e.is_connect() || e.is_request();
                last = Some(Error::backend(format!("{url}: {e}"), retryable, attempt));
                if !retryable {
                    break;
                }
            }
        }
    }
    Err(last.unwrap_or_else(|| Error::backend(format!("{url}: no attempt made"), false, 0)))
}

/// Client for `POST /v1/answer`.
#[derive(Debug)]
pub struct HttpBackend {
    id: String,
    config: EndpointConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl HttpBackend {
    pub fn new(config: EndpointConfig) -> Result<Self> {
        let client = config.client()?;
        Ok(Self {
            id: format!("http:{}", config.url),
            gate: Gate::new(config.max_in_flight),
            config,
            client,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }
}

impl Backend for HttpBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn answer(&self, request: &BackendRequest) -> Result<BackendResponse> {
        // The trust boundary: nothing past the query time goes on the wire.
        request.check_causality()?;
        let _slot = self.gate.acquire();
        let url = self.config.endpoint("/v1/answer");
        let (body, first_byte_ms) = post_json(&self.client, &url, request, self.config.retries)?;
        let parsed: AnswerBody = serde_json::from_slice(&body)
            .map_err(|e| Error::backend(format!("{url}: non-conforming reply: {e}"), false, 1))?;
        let response = BackendResponse {
            query_id: parsed.query_id,
            answer_text: parsed.answer_text,
            chosen_option: parsed.chosen_option,
            ttft_ms: parsed.ttft_ms,
            token_count: parsed.token_count,
            client_ttft_ms: Some(first_byte_ms),
        };
        response.validate_against(request)?;
        Ok(response)
    }
}

#[derive(Debug, Serialize)]
struct EmbedItem {
    mode: &'static str,
    data: String,
}

#[derive(Debug, Serialize)]
struct EmbedRequest {
    items: Vec<EmbedItem>,
}

#[derive(Debug, Deserialize)]
struct EmbedBody {
    dim: usize,
    #[allow(dead_code)]
    normalized: bool,
    embeddings: Vec<Vec<f32>>,
}

/// Client for `POST /v1/embed`. Returned vectors are renormalized locally,
/// since the server only promises unit norm to 1e-4.
#[derive(Debug)]
pub struct HttpEmbedder {
    id: String,
    dim: usize,
    config: EndpointConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl HttpEmbedder {
    pub fn new(config: EndpointConfig, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be positive".into()));
        }
        let client = config.client()?;
        Ok(Self {
            id: format!("http:{}#d{dim}", config.url),
            dim,
            gate: Gate::new(config.max_in_flight),
            config,
            client,
        })
    }

    fn embed_items<T: Scalar>(&self, items: Vec<EmbedItem>) -> Result<Vec<Vec<T>>> {
        let n = items.len();
        let _slot = self.gate.acquire();
        let url = self.config.endpoint("/v1/embed");
        let (body, _) = post_json(&self.client, &url, &EmbedRequest { items }, self.config.retries)?;
        let parsed: EmbedBody = serde_json::from_slice(&body)
            .map_err(|e| Error::IndexBuild(format!("{url}: non-conforming reply: {e}")))?;
        if parsed.dim != self.dim || parsed.embeddings.len() != n {
            return Err(Error::IndexBuild(format!(
                "{url}: expected {n} vectors of dim {}, got {} of dim {}",
                self.dim,
                parsed.embeddings.len(),
                parsed.dim
            )));
        }
        parsed
            .embeddings
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(Error::IndexBuild(format!(
                        "{url}: vector of dim {} in a dim-{} reply",
                        v.len(),
                        self.dim
                    )));
                }
                let mut out: Vec<T> = v.into_iter().map(|x| T::from_f32(x).unwrap_or_else(T::nan)).collect();
                if !scalar::normalize(&mut out) {
                    return Err(Error::IndexBuild(format!("{url}: zero embedding")));
                }
                Ok(out)
            })
            .collect()
    }
}

impl<T: Scalar> Embedder<T> for HttpEmbedder {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_frames(&self, _video_id: &str, frames: &[FrameRef<T>]) -> Result<Vec<Vec<T>>> {
        let items = frames
            .iter()
            .map(|f| {
                let (mode, data) = resolve_frame(f, self.config.frame_mode)?.to_wire();
                Ok(EmbedItem { mode, data })
            })
            .collect::<Result<_>>()?;
        self.embed_items(items)
    }

    fn embed_query(&self, query: &QueryText<'_>) -> Result<Vec<T>> {
        let mut v = self.embed_items(vec![EmbedItem {
            mode: "text",
            data: query.text.to_string(),
        }])?;
        Ok(v.remove(0))
    }
}
