//! Chunked history index with exact cosine top-k.
//!
//! Index file layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SCTXIDX1"
//! dim        u32
//! chunk_len  u32
//! id_len     u32, then id_len bytes of UTF-8 embedder id
//! n_chunks   u64
//! per chunk: chunk_id u64, start_index u64, end_index u64, dim x f32
//! ```

use std::cmp::Ordering;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};
use crate::stream::{FrameRef, StreamTimeline};

const MAGIC: &[u8; 8] = b"SCTXIDX1";

/// Frames per chunk when unconfigured.
pub const DEFAULT_CHUNK_LEN: usize = 8;
/// Retrieved chunks per query when unconfigured.
pub const DEFAULT_TOP_K: usize = 5;

/// A contiguous run of frames retrieved as one unit.
///
/// `embedding` is empty until the chunk has been embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct Chunk<T = f32> {
    pub chunk_id: usize,
    pub start_index: usize,
    pub end_index: usize,
    pub frames: Vec<FrameRef<T>>,
    pub embedding: Vec<T>,
}

impl<T> Chunk<T> {
    pub fn is_embedded(&self) -> bool {
        !self.embedding.is_empty()
    }

    /// `[first, last]` frame timestamps, when frames are attached.
    pub fn span(&self) -> Option<[f64; 2]> {
        Some([self.frames.first()?.timestamp_s, self.frames.last()?.timestamp_s])
    }

    /// Frames covered, from the index span (valid even without attached frames).
    pub fn frame_count(&self) -> usize {
        self.end_index + 1 - self.start_index
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkIndex<T = f32> {
    chunks: Vec<Chunk<T>>,
    dim: usize,
    chunk_len: usize,
    embedder_id: String,
}

/// Splits `frames` into consecutive groups of `chunk_len`; the last group may
/// be shorter.
pub fn chunk_frames<T: Clone>(frames: &[FrameRef<T>], chunk_len: usize) -> Result<Vec<Chunk<T>>> {
    if chunk_len < 1 {
        return Err(Error::InvalidConfig("chunk_len must be at least 1".into()));
    }
    Ok(frames
        .chunks(chunk_len)
        .enumerate()
        .map(|(i, group)| Chunk {
            chunk_id: i,
            start_index: group[0].index,
            end_index: group[group.len() - 1].index,
            frames: group.to_vec(),
            embedding: Vec::new(),
        })
        .collect())
}

/// Embeds each chunk as the renormalized mean of its frame embeddings.
///
/// Frames that already carry an embedding use it; the rest are sent to the
/// embedder in one batch per call.
pub fn embed_chunks<T: Scalar>(
    video_id: &str,
    chunks: Vec<Chunk<T>>,
    chunk_len: usize,
    embedder: &dyn Embedder<T>,
) -> Result<ChunkIndex<T>> {
    let chunks = embed_chunk_list(video_id, chunks, embedder)?;
    ChunkIndex::new(chunks, embedder.dim(), chunk_len, embedder.embedder_id())
}

/// Fills in each chunk's embedding without building an index.
pub(crate) fn embed_chunk_list<T: Scalar>(
    video_id: &str,
    mut chunks: Vec<Chunk<T>>,
    embedder: &dyn Embedder<T>,
) -> Result<Vec<Chunk<T>>> {
    let dim = embedder.dim();
    let pending: Vec<FrameRef<T>> = chunks
        .iter()
        .flat_map(|c| c.frames.iter())
        .filter(|f| f.embedding.is_none())
        .cloned()
        .collect();
    let mut fresh = if pending.is_empty() {
        Vec::new()
    } else {
        embedder.embed_frames(video_id, &pending)?
    };
    if fresh.len() != pending.len() {
        return Err(Error::IndexBuild(format!(
            "embedder returned {} vectors for {} frames",
            fresh.len(),
            pending.len()
        )));
    }
    fresh.reverse();

    for chunk in &mut chunks {
        let mut sum = vec![0.0f64; dim];
        for frame in &chunk.frames {
            let owned;
            let v: &[T] = match &frame.embedding {
                Some(e) => e,
                None => {
                    owned = fresh.pop().expect("length checked above");
                    &owned
                }
            };
            if v.len() != dim {
                return Err(Error::IndexBuild(format!(
                    "frame {} embedding has dim {}, embedder declares {dim}",
                    frame.index,
                    v.len()
                )));
            }
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x.to_f64_lossy();
            }
        }
        let n = chunk.frames.len() as f64;
        let mut mean: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
        if scalar::l2_norm_f64(&mean) <= 1e-9 || !scalar::normalize(&mut mean) {
            return Err(Error::DegenerateEmbedding {
                chunk_id: chunk.chunk_id,
            });
        }
        chunk.embedding = mean.into_iter().map(T::from_f64_lossy).collect();
    }
    Ok(chunks)
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let nu = scalar::l2_norm(u);
    let nv = scalar::l2_norm(v);
    if !(nu > T::zero()) || !(nv > T::zero()) {
        return Err(Error::InvalidInput("cosine of a zero vector".into()));
    }
    let c = scalar::dot(u, v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Orders by similarity descending, then by earlier `start_index`.
fn rank_order<T: Scalar>(a: &(T, usize), b: &(T, usize)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

impl<T: Scalar> ChunkIndex<T> {
    /// Canonicalizes chunk order by `start_index` and reassigns dense ids.
    pub fn new(
        mut chunks: Vec<Chunk<T>>,
        dim: usize,
        chunk_len: usize,
        embedder_id: impl Into<String>,
    ) -> Result<Self> {
        chunks.sort_by_key(|c| c.start_index);
        for (i, c) in chunks.iter_mut().enumerate() {
            if c.embedding.len() != dim {
                return Err(Error::IndexBuild(format!(
                    "chunk starting at frame {} has dim {}, index dim {dim}",
                    c.start_index,
                    c.embedding.len()
                )));
            }
            if !scalar::is_unit(&c.embedding) {
                return Err(Error::IndexBuild(format!(
                    "chunk starting at frame {} is not unit-norm",
                    c.start_index
                )));
            }
            c.chunk_id = i;
        }
        for pair in chunks.windows(2) {
            if pair[1].start_index <= pair[0].end_index {
                return Err(Error::IndexBuild(format!(
                    "chunks overlap at frame {}",
                    pair[1].start_index
                )));
            }
        }
        Ok(Self {
            chunks,
            dim,
            chunk_len,
            embedder_id: embedder_id.into(),
        })
    }

    pub fn chunks(&self) -> &[Chunk<T>] {
        &self.chunks
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// The `k` most similar chunks with their scores, in chronological order.
    pub fn top_k_scored(&self, query: &[T], k: usize) -> Result<Vec<(&Chunk<T>, T)>> {
        if query.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "query dim {} does not match index dim {}",
                query.len(),
                self.dim
            )));
        }
        if !(scalar::l2_norm(query) > T::zero()) {
            return Err(Error::InvalidInput("zero query vector".into()));
        }
        if k == 0 || self.chunks.is_empty() {
            return Ok(Vec::new());
        }
        let qn = scalar::l2_norm(query);
        // Chunk embeddings are unit-norm, so dot / |q| is the cosine.
        let mut scored: Vec<(T, usize)> = self
            .chunks
            .iter()
            .enumerate()
            .map(|(i, c)| (scalar::dot(query, &c.embedding) / qn, i))
            .collect();
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank_order);
            scored.truncate(k);
        }
        // Index order is start_index order.
        scored.sort_by_key(|&(_, i)| i);
        Ok(scored.into_iter().map(|(s, i)| (&self.chunks[i], s)).collect())
    }

    pub fn top_k(&self, query: &[T], k: usize) -> Result<Vec<&Chunk<T>>> {
        Ok(self.top_k_scored(query, k)?.into_iter().map(|(c, _)| c).collect())
    }

    /// Re-attaches frame references after loading from disk.
    pub fn rehydrate(&mut self, timeline: &StreamTimeline<T>) -> Result<()> {
        for c in &mut self.chunks {
            let lo = timeline.frames.partition_point(|f| f.index < c.start_index);
            let hi = timeline.frames.partition_point(|f| f.index <= c.end_index);
            if hi - lo != c.end_index + 1 - c.start_index {
                return Err(Error::InvalidInput(format!(
                    "timeline {} lacks frames {}..={} for chunk {}",
                    timeline.video_id, c.start_index, c.end_index, c.chunk_id
                )));
            }
            c.frames = timeline.frames[lo..hi].to_vec();
        }
        Ok(())
    }

    /// Serializes to the binary index format; embeddings are stored as `f32`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&u32::try_from(self.dim).map_err(too_large)?.to_le_bytes())?;
        w.write_all(&u32::try_from(self.chunk_len).map_err(too_large)?.to_le_bytes())?;
        let id = self.embedder_id.as_bytes();
        w.write_all(&u32::try_from(id.len()).map_err(too_large)?.to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&(self.chunks.len() as u64).to_le_bytes())?;
        for c in &self.chunks {
            w.write_all(&(c.chunk_id as u64).to_le_bytes())?;
            w.write_all(&(c.start_index as u64).to_le_bytes())?;
            w.write_all(&(c.end_index as u64).to_le_bytes())?;
            for x in &c.embedding {
                let v = x.to_f32().unwrap_or(f32::NAN);
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the binary index format. Chunks come back without frames; see
    /// [`ChunkIndex::rehydrate`].
    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::InvalidInput("not a chunk index file".into()));
        }
        let dim = read_u32(&mut r)? as usize;
        let chunk_len = read_u32(&mut r)? as usize;
        let id_len = read_u32(&mut r)? as usize;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id)?;
        let embedder_id = String::from_utf8(id)
            .map_err(|_| Error::InvalidInput("embedder id is not UTF-8".into()))?;
        let n = read_u64(&mut r)?;
        let mut chunks = Vec::new();
        for _ in 0..n {
            let chunk_id = read_u64(&mut r)? as usize;
            let start_index = read_u64(&mut r)? as usize;
            let end_index = read_u64(&mut r)? as usize;
            let mut embedding = Vec::with_capacity(dim);
            for _ in 0..dim {
                let mut b = [0u8; 4];
                r.read_exact(&mut b)?;
                embedding.push(T::from_f32(f32::from_le_bytes(b)).unwrap_or_else(T::nan));
            }
            chunks.push(Chunk {
                chunk_id,
                start_index,
                end_index,
                frames: Vec::new(),
                embedding,
            });
        }
        let ids_dense = chunks.iter().enumerate().all(|(i, c)| c.chunk_id == i);
        let index = Self::new(chunks, dim, chunk_len, embedder_id)?;
        if !ids_dense {
            return Err(Error::InvalidInput("chunk ids are not dense from 0".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = fs::File::create(path)?;
        self.write_to(io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = fs::File::open(path)?;
        Self::read_from(io::BufReader::new(f))
    }
}

fn too_large(_: std::num::TryFromIntError) -> Error {
    Error::InvalidInput("value does not fit the index header".into())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
