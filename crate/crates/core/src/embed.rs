//! Frame and query embedding providers.

use std::collections::HashMap;

use rand_distr::{Distribution, StandardNormal};

use crate::backends::GroundingMap;
use crate::bench::BenchmarkSet;
use crate::error::{Error, Result};
use crate::rng::keyed_rng;
use crate::scalar::{self, Scalar};
use crate::stream::FrameRef;

/// The query side of a retrieval lookup.
#[derive(Debug, Clone, Copy)]
pub struct QueryText<'a> {
    pub question_id: &'a str,
    pub video_id: &'a str,
    pub text: &'a str,
}

/// Maps frames and queries into one unit-norm embedding space of fixed `dim`.
pub trait Embedder<T: Scalar>: Send + Sync {
    fn embedder_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_frames(&self, video_id: &str, frames: &[FrameRef<T>]) -> Result<Vec<Vec<T>>>;
    fn embed_query(&self, query: &QueryText<'_>) -> Result<Vec<T>>;
}

/// Deterministic stand-in for an image-text encoder over symbolic frames.
///
/// Frames inside a question's evidence interval embed to that question's
/// topic vector and the question embeds to the same vector; every other frame
/// gets a pseudo-random unit vector keyed by `(seed, video, index)`. Only
/// meaningful for benchmarks that carry a grounding map.
#[derive(Debug, Clone)]
pub struct GroundedEmbedder {
    id: String,
    dim: usize,
    seed: u64,
    /// video -> (evidence interval, question id), sorted by question id.
    evidence: HashMap<String, Vec<([f64; 2], String)>>,
}

impl GroundedEmbedder {
    pub fn new(dim: usize, seed: u64, grounding: &GroundingMap, video_of: &HashMap<String, String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be positive".into()));
        }
        let mut evidence: HashMap<String, Vec<([f64; 2], String)>> = HashMap::new();
        for (qid, entry) in grounding.iter() {
            let Some(video) = video_of.get(qid) else {
                continue;
            };
            for iv in &entry.evidence {
                evidence
                    .entry(video.clone())
                    .or_default()
                    .push((*iv, qid.clone()));
            }
        }
        for list in evidence.values_mut() {
            list.sort_by(|a, b| a.1.cmp(&b.1));
        }
        Ok(Self {
            id: format!("grounded-synthetic-d{dim}"),
            dim,
            seed,
            evidence,
        })
    }

    pub fn from_benchmark(set: &BenchmarkSet, dim: usize, seed: u64) -> Result<Self> {
        let grounding = set.grounding.as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!(
                "benchmark `{}` has no grounding map; the grounded embedder needs one",
                set.name
            ))
        })?;
        let video_of = set
            .questions
            .iter()
            .map(|q| (q.question_id.clone(), q.video_id.clone()))
            .collect();
        Self::new(dim, seed, grounding, &video_of)
    }

    fn unit_vector<T: Scalar>(&self, parts: &[&[u8]]) -> Vec<T> {
        let mut rng = keyed_rng(self.seed, parts);
        loop {
            let mut v: Vec<T> = (0..self.dim)
                .map(|_| T::from_f64_lossy(StandardNormal.sample(&mut rng)))
                .collect();
            if scalar::normalize(&mut v) {
                return v;
            }
        }
    }

    fn topic<T: Scalar>(&self, question_id: &str) -> Vec<T> {
        self.unit_vector(&[b"topic", question_id.as_bytes()])
    }
}

impl<T: Scalar> Embedder<T> for GroundedEmbedder {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_frames(&self, video_id: &str, frames: &[FrameRef<T>]) -> Result<Vec<Vec<T>>> {
        let evidence = self.evidence.get(video_id);
        Ok(frames
            .iter()
            .map(|f| {
                let hit = evidence.and_then(|list| {
                    list.iter()
                        .find(|(iv, _)| iv[0] <= f.timestamp_s && f.timestamp_s <= iv[1])
                });
                match hit {
                    Some((_, qid)) => self.topic(qid),
                    None => self.unit_vector(&[
                        b"frame",
                        video_id.as_bytes(),
                        &(f.index as u64).to_le_bytes(),
                    ]),
                }
            })
            .collect())
    }

    fn embed_query(&self, query: &QueryText<'_>) -> Result<Vec<T>> {
        Ok(self.topic(query.question_id))
    }
}
