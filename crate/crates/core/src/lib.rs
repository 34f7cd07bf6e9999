//! Causal streaming context construction and evaluation for video question answering.
//!
//! Frames are revealed on a fixed-rate timeline; each query sees only the
//! prefix observed up to its query time. A [`policy`] turns that prefix into a
//! bounded working context (recency window, recency plus retrieved history
//! chunks, or keep-all), a [`backends::Backend`] answers it, and [`scoring`]
//! and [`profiler`] turn the answers into accuracy, perception/memory deltas and
//! latency/retention profiles. [`runner`] wires it together for the CLI.
//!
//! Embedding math is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the `f32` instantiation used by the wire protocol and the index
//! file format.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backends;
pub mod bench;
pub mod embed;
pub mod error;
pub mod policy;
pub mod profiler;
mod rng;
pub mod retrieval;
pub mod runner;
pub mod scalar;
pub mod scoring;
pub mod stream;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// A frame with an optional `f32` embedding.
pub type Frame = stream::FrameRef<f32>;
/// A timeline of `f32`-embedded frames.
pub type Timeline = stream::StreamTimeline<f32>;
/// A retrieval chunk with an `f32` embedding.
pub type Chunk = retrieval::Chunk<f32>;
/// The `f32` chunk index; this is the instantiation persisted to disk.
pub type ChunkIndex = retrieval::ChunkIndex<f32>;
/// A working context built over `f32` embeddings.
pub type ContextBundle = policy::ContextBundle<f32>;

pub type Frame64 = stream::FrameRef<f64>;
pub type Timeline64 = stream::StreamTimeline<f64>;
pub type Chunk64 = retrieval::Chunk<f64>;
pub type ChunkIndex64 = retrieval::ChunkIndex<f64>;
pub type ContextBundle64 = policy::ContextBundle<f64>;
