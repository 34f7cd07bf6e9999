//! Bounded working-context construction.
//!
//! Every policy is a pure function of a [`VisiblePrefix`] and a
//! [`PolicyConfig`]:
//!
//! * `recency` keeps the last `n_recent` frames and nothing else.
//! * `visual_rag` keeps the same recent window and adds the `k_retrieved`
//!   history chunks most similar to the query. History is the prefix minus
//!   the recent window, chunked from the first frame.
//! * `keep_all` keeps the whole prefix; it exists as the unbounded contrast.

use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::embed::{Embedder, QueryText};
use crate::error::{Error, Result};
use crate::profiler::AccountingModel;
use crate::retrieval::{self, Chunk, ChunkIndex, DEFAULT_CHUNK_LEN, DEFAULT_TOP_K};
use crate::scalar::Scalar;
use crate::stream::{FrameRef, VisiblePrefix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Recency,
    VisualRag,
    KeepAll,
}

impl PolicyKind {
    /// Stable policy id used in reports and configs.
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Recency => "recency",
            PolicyKind::VisualRag => "visual_rag",
            PolicyKind::KeepAll => "keep_all",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recency" => Ok(PolicyKind::Recency),
            "visual_rag" => Ok(PolicyKind::VisualRag),
            "keep_all" => Ok(PolicyKind::KeepAll),
            other => Err(Error::InvalidConfig(format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub n_recent: usize,
    pub k_retrieved: usize,
    pub chunk_len: usize,
    pub fps: f64,
    /// Reuse embedded history chunks across queries on the same video.
    pub index_cache: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Recency,
            n_recent: 4,
            k_retrieved: DEFAULT_TOP_K,
            chunk_len: DEFAULT_CHUNK_LEN,
            fps: 1.0,
            index_cache: false,
        }
    }
}

impl PolicyConfig {
    pub fn recency(n_recent: usize) -> Self {
        Self {
            kind: PolicyKind::Recency,
            n_recent,
            ..Self::default()
        }
    }

    pub fn visual_rag(n_recent: usize, k_retrieved: usize, chunk_len: usize) -> Self {
        Self {
            kind: PolicyKind::VisualRag,
            n_recent,
            k_retrieved,
            chunk_len,
            ..Self::default()
        }
    }

    pub fn keep_all() -> Self {
        Self {
            kind: PolicyKind::KeepAll,
            ..Self::default()
        }
    }

    pub fn policy_id(&self) -> &'static str {
        self.kind.as_str()
    }

    /// Largest frame count a bundle may hold, or `None` for `keep_all`.
    pub fn frame_bound(&self) -> Option<usize> {
        match self.kind {
            PolicyKind::Recency => Some(self.n_recent),
            PolicyKind::VisualRag => Some(self.n_recent + self.k_retrieved * self.chunk_len),
            PolicyKind::KeepAll => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(Error::InvalidConfig(format!("fps must be positive, got {}", self.fps)));
        }
        if matches!(self.kind, PolicyKind::Recency | PolicyKind::VisualRag) && self.n_recent < 1 {
            return Err(Error::InvalidConfig("n_recent must be at least 1".into()));
        }
        if self.kind == PolicyKind::VisualRag && self.chunk_len < 1 {
            return Err(Error::InvalidConfig("chunk_len must be at least 1".into()));
        }
        Ok(())
    }

    fn expect(&self, kind: PolicyKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidConfig(format!(
                "policy config is `{}`, expected `{}`",
                self.kind.as_str(),
                kind.as_str()
            )));
        }
        self.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BudgetReport {
    pub frame_count: usize,
    pub retrieved_frame_count: usize,
    pub retained_bytes: u64,
}

/// The per-query working context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct ContextBundle<T = f32> {
    pub recent_frames: Vec<FrameRef<T>>,
    pub retrieved_chunks: Vec<Chunk<T>>,
    pub query_time_s: f64,
    pub policy_id: String,
    pub budget: BudgetReport,
}

impl<T: Scalar> ContextBundle<T> {
    fn assemble(
        recent_frames: Vec<FrameRef<T>>,
        retrieved_chunks: Vec<Chunk<T>>,
        query_time_s: f64,
        policy_id: &str,
    ) -> Self {
        let mut bundle = Self {
            recent_frames,
            retrieved_chunks,
            query_time_s,
            policy_id: policy_id.to_string(),
            budget: BudgetReport::default(),
        };
        bundle.budget = context_budget(&bundle);
        bundle
    }

    pub fn total_frames(&self) -> usize {
        self.budget.frame_count + self.budget.retrieved_frame_count
    }

    /// Frames in backend order: retrieved chunks chronologically, then the
    /// recent window.
    pub fn ordered_frames(&self) -> impl Iterator<Item = &FrameRef<T>> {
        self.retrieved_chunks
            .iter()
            .flat_map(|c| c.frames.iter())
            .chain(self.recent_frames.iter())
    }

    /// Fails if any frame postdates the query.
    pub fn check_causality(&self) -> Result<()> {
        match self.ordered_frames().find(|f| f.timestamp_s > self.query_time_s) {
            Some(f) => Err(Error::Causality {
                frame_t: f.timestamp_s,
                query_time_s: self.query_time_s,
            }),
            None => Ok(()),
        }
    }
}

fn last_n<T: Clone>(frames: &[FrameRef<T>], n: usize) -> Vec<FrameRef<T>> {
    frames[frames.len().saturating_sub(n)..].to_vec()
}

fn require_frames<T>(prefix: &VisiblePrefix<'_, T>) -> Result<()> {
    if prefix.is_empty() {
        return Err(Error::NoObservation {
            query_time_s: prefix.query_time_s,
        });
    }
    Ok(())
}

/// The last `min(n_recent, |prefix|)` frames.
pub fn recency_window<T: Scalar>(
    prefix: &VisiblePrefix<'_, T>,
    cfg: &PolicyConfig,
) -> Result<ContextBundle<T>> {
    cfg.expect(PolicyKind::Recency)?;
    require_frames(prefix)?;
    Ok(ContextBundle::assemble(
        last_n(prefix.frames, cfg.n_recent),
        Vec::new(),
        prefix.query_time_s,
        cfg.policy_id(),
    ))
}

/// The whole prefix.
pub fn keep_all<T: Scalar>(
    prefix: &VisiblePrefix<'_, T>,
    cfg: &PolicyConfig,
) -> Result<ContextBundle<T>> {
    cfg.expect(PolicyKind::KeepAll)?;
    require_frames(prefix)?;
    Ok(ContextBundle::assemble(
        prefix.frames.to_vec(),
        Vec::new(),
        prefix.query_time_s,
        cfg.policy_id(),
    ))
}

/// Recent window plus the top-k history chunks by cosine similarity to
/// `query_embedding`. With no history beyond the window, returns the window
/// alone.
pub fn visual_rag<T: Scalar>(
    prefix: &VisiblePrefix<'_, T>,
    query_embedding: &[T],
    cfg: &PolicyConfig,
    builder: &IndexBuilder<'_, T>,
) -> Result<ContextBundle<T>> {
    cfg.expect(PolicyKind::VisualRag)?;
    require_frames(prefix)?;
    let split = prefix.len().saturating_sub(cfg.n_recent);
    let (history, recent) = prefix.frames.split_at(split);
    let retrieved = if history.is_empty() || cfg.k_retrieved == 0 {
        Vec::new()
    } else {
        let index = builder.build(prefix.video_id, history, cfg.chunk_len)?;
        index
            .top_k(query_embedding, cfg.k_retrieved)?
            .into_iter()
            .cloned()
            .collect()
    };
    Ok(ContextBundle::assemble(
        recent.to_vec(),
        retrieved,
        prefix.query_time_s,
        cfg.policy_id(),
    ))
}

/// Dispatches on `cfg.kind`. `visual_rag` needs both a query and a builder.
pub fn build_context<T: Scalar>(
    prefix: &VisiblePrefix<'_, T>,
    cfg: &PolicyConfig,
    query: Option<&QueryText<'_>>,
    builder: Option<&IndexBuilder<'_, T>>,
) -> Result<ContextBundle<T>> {
    match cfg.kind {
        PolicyKind::Recency => recency_window(prefix, cfg),
        PolicyKind::KeepAll => keep_all(prefix, cfg),
        PolicyKind::VisualRag => {
            let builder = builder.ok_or_else(|| {
                Error::InvalidConfig("visual_rag requires an embedder".into())
            })?;
            let query = query.ok_or_else(|| {
                Error::InvalidInput("visual_rag requires a query".into())
            })?;
            let q = builder.embedder.embed_query(query)?;
            visual_rag(prefix, &q, cfg, builder)
        }
    }
}

/// Counts and accounted bytes under the default [`AccountingModel`].
pub fn context_budget<T>(bundle: &ContextBundle<T>) -> BudgetReport {
    context_budget_with(bundle, &AccountingModel::default())
}

pub fn context_budget_with<T>(bundle: &ContextBundle<T>, acct: &AccountingModel) -> BudgetReport {
    let frame_count = bundle.recent_frames.len();
    let retrieved_frame_count: usize = bundle.retrieved_chunks.iter().map(|c| c.frames.len()).sum();
    let embedding_values: usize = bundle.retrieved_chunks.iter().map(|c| c.embedding.len()).sum();
    BudgetReport {
        frame_count,
        retrieved_frame_count,
        retained_bytes: acct.frame_bytes(frame_count + retrieved_frame_count)
            + embedding_values as u64 * acct.bytes_per_embedding_dim
            + acct.fixed_overhead_bytes,
    }
}

type CacheKey = (String, usize, String);

/// Embedded complete history chunks, shared across queries.
///
/// History always starts at frame 0 and is chunked from there, so full-length
/// chunks never change as the stream grows; only the trailing partial chunk is
/// re-embedded per query. Writes take the lock exclusively, reads share it.
#[derive(Debug, Default)]
pub struct IndexCache<T = f32> {
    complete: RwLock<HashMap<CacheKey, Vec<Chunk<T>>>>,
}

impl<T: Scalar> IndexCache<T> {
    pub fn new() -> Self {
        Self {
            complete: RwLock::new(HashMap::new()),
        }
    }

    /// Total cached chunk embeddings across all videos.
    pub fn cached_chunks(&self) -> usize {
        self.complete
            .read()
            .expect("index cache poisoned")
            .values()
            .map(Vec::len)
            .sum()
    }
}

/// Builds (or extends from cache) the history index for one query.
pub struct IndexBuilder<'a, T = f32> {
    pub embedder: &'a dyn Embedder<T>,
    pub cache: Option<&'a IndexCache<T>>,
}

impl<'a, T: Scalar> IndexBuilder<'a, T> {
    pub fn new(embedder: &'a dyn Embedder<T>) -> Self {
        Self { embedder, cache: None }
    }

    pub fn with_cache(embedder: &'a dyn Embedder<T>, cache: &'a IndexCache<T>) -> Self {
        Self {
            embedder,
            cache: Some(cache),
        }
    }

    pub fn build(
        &self,
        video_id: &str,
        history: &[FrameRef<T>],
        chunk_len: usize,
    ) -> Result<ChunkIndex<T>> {
        let Some(cache) = self.cache else {
            let chunks = retrieval::chunk_frames(history, chunk_len)?;
            return retrieval::embed_chunks(video_id, chunks, chunk_len, self.embedder);
        };
        if chunk_len < 1 {
            return Err(Error::InvalidConfig("chunk_len must be at least 1".into()));
        }
        let key = (
            video_id.to_string(),
            chunk_len,
            self.embedder.embedder_id().to_string(),
        );
        let full_in_history = history.len() / chunk_len;
        let mut chunks: Vec<Chunk<T>> = {
            let map = cache.complete.read().expect("index cache poisoned");
            map.get(&key)
                .map(|cached| {
                    cached
                        .iter()
                        .take(full_in_history)
                        .enumerate()
                        .take_while(|(i, c)| history[i * chunk_len].index == c.start_index)
                        .map(|(_, c)| c.clone())
                        .collect()
                })
                .unwrap_or_default()
        };
        let reused = chunks.len();
        let fresh = retrieval::embed_chunk_list(
            video_id,
            retrieval::chunk_frames(&history[reused * chunk_len..], chunk_len)?,
            self.embedder,
        )?;
        let new_complete: Vec<Chunk<T>> = fresh
            .iter()
            .filter(|c| c.frames.len() == chunk_len)
            .cloned()
            .collect();
        if !new_complete.is_empty() {
            let mut map = cache.complete.write().expect("index cache poisoned");
            let entry = map.entry(key).or_default();
            // Another query may have extended the entry meanwhile.
            if entry.len() == reused {
                entry.extend(new_complete);
            }
        }
        chunks.extend(fresh);
        ChunkIndex::new(
            chunks,
            self.embedder.dim(),
            chunk_len,
            self.embedder.embedder_id(),
        )
    }
}
