//! Fixed-rate frame timelines and causal prefixes.
//!
//! A timeline is anchored at `t = 0`: frame `k` sits at `k / fps` and the last
//! frame is the largest `k` with `k / fps <= duration_s`. A query at time `t`
//! sees every frame with `timestamp_s <= t` (inclusive).

use std::fs;
use std::path::Path;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// Slack used when turning `duration_s * fps` into a frame count, so that
/// e.g. `0.29 * 100` still yields 29 intervals.
const GRID_EPS: f64 = 1e-9;

/// One sampled frame. `source` is a file path or an opaque handle; pixels are
/// never held here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct FrameRef<T = f32> {
    pub index: usize,
    #[serde(rename = "t")]
    pub timestamp_s: f64,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<T>>,
}

impl<T: Scalar> FrameRef<T> {
    pub fn new(index: usize, timestamp_s: f64, source: impl Into<String>) -> Self {
        Self {
            index,
            timestamp_s,
            source: source.into(),
            embedding: None,
        }
    }

    /// Attaches an embedding, rejecting vectors that are not unit-norm.
    pub fn with_embedding(mut self, embedding: Vec<T>) -> Result<Self> {
        if !scalar::is_unit(&embedding) {
            return Err(Error::InvalidInput(format!(
                "frame {} embedding has norm {}, expected 1",
                self.index,
                scalar::l2_norm_f64(&embedding)
            )));
        }
        self.embedding = Some(embedding);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct StreamTimeline<T = f32> {
    pub video_id: String,
    pub duration_s: f64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub frames: Vec<FrameRef<T>>,
}

fn default_fps() -> f64 {
    1.0
}

/// Frames visible at a query time, borrowed from their timeline.
#[derive(Debug, Clone, Copy)]
pub struct VisiblePrefix<'a, T = f32> {
    pub video_id: &'a str,
    pub query_time_s: f64,
    pub fps: f64,
    pub frames: &'a [FrameRef<T>],
}

impl<'a, T> VisiblePrefix<'a, T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Builds the `k / fps` grid for `k = 0 ..= floor(duration_s * fps)`.
///
/// Sources are symbolic handles `frame://<video_id>/<index>`.
pub fn sample_timeline<T: Scalar>(
    video_id: &str,
    duration_s: f64,
    fps: f64,
) -> Result<StreamTimeline<T>> {
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(Error::InvalidConfig(format!("fps must be positive, got {fps}")));
    }
    if !(duration_s >= 0.0) || !duration_s.is_finite() {
        return Err(Error::InvalidInput(format!(
            "duration must be non-negative, got {duration_s}"
        )));
    }
    let last = (duration_s * fps + GRID_EPS).floor() as usize;
    let frames = (0..=last)
        .map(|k| FrameRef::new(k, k as f64 / fps, format!("frame://{video_id}/{k}")))
        .collect();
    Ok(StreamTimeline {
        video_id: video_id.to_string(),
        duration_s,
        fps,
        frames,
    })
}

impl<T: Scalar> StreamTimeline<T> {
    /// Every frame with `timestamp_s <= t_query`, in timeline order.
    pub fn visible_prefix(&self, t_query: f64) -> Result<VisiblePrefix<'_, T>> {
        if !(t_query >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "query time must be non-negative, got {t_query}"
            )));
        }
        let end = self.frames.partition_point(|f| f.timestamp_s <= t_query);
        Ok(VisiblePrefix {
            video_id: &self.video_id,
            query_time_s: t_query,
            fps: self.fps,
            frames: &self.frames[..end],
        })
    }

    /// Checks the timeline invariants; used for manifests produced by
    /// external tools.
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "timeline {}: fps must be positive",
                self.video_id
            )));
        }
        if !(self.duration_s >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "timeline {}: negative duration",
                self.video_id
            )));
        }
        let mut prev: Option<usize> = None;
        for f in &self.frames {
            if prev.is_some_and(|p| f.index <= p) {
                return Err(Error::InvalidInput(format!(
                    "timeline {}: frame indices not strictly increasing at {}",
                    self.video_id, f.index
                )));
            }
            prev = Some(f.index);
            let expected = f.index as f64 / self.fps;
            if (f.timestamp_s - expected).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "timeline {}: frame {} at t={} but grid puts it at {}",
                    self.video_id, f.index, f.timestamp_s, expected
                )));
            }
            if f.timestamp_s > self.duration_s + 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "timeline {}: frame {} at t={} beyond duration {}",
                    self.video_id, f.index, f.timestamp_s, self.duration_s
                )));
            }
            if let Some(e) = &f.embedding {
                if !scalar::is_unit(e) {
                    return Err(Error::InvalidInput(format!(
                        "timeline {}: frame {} embedding is not unit-norm",
                        self.video_id, f.index
                    )));
                }
            }
        }
        Ok(())
    }

    /// Reads a JSON manifest `{video_id, duration_s, fps, frames:[{index, t, source}]}`.
    pub fn load_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let timeline: Self = serde_json::from_str(&text)?;
        timeline.validate()?;
        Ok(timeline)
    }

    pub fn save_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// How frame contents travel to a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadMode {
    /// File bytes, base64-encoded on the wire.
    #[serde(rename = "b64")]
    Bytes,
    /// The locator string itself.
    #[default]
    Ref,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FramePayload {
    Bytes(Vec<u8>),
    Locator(String),
}

impl FramePayload {
    /// Wire `(mode, data)` pair.
    pub fn to_wire(&self) -> (&'static str, String) {
        match self {
            FramePayload::Bytes(b) => ("b64", base64::engine::general_purpose::STANDARD.encode(b)),
            FramePayload::Locator(l) => ("ref", l.clone()),
        }
    }
}

/// Reads the frame's file in [`PayloadMode::Bytes`]; passes the locator
/// through unchanged in [`PayloadMode::Ref`].
pub fn resolve_frame<T>(frame: &FrameRef<T>, mode: PayloadMode) -> Result<FramePayload> {
    if frame.source.is_empty() {
        return Err(Error::Resolution {
            locator: String::new(),
            reason: "empty locator".into(),
        });
    }
    match mode {
        PayloadMode::Ref => Ok(FramePayload::Locator(frame.source.clone())),
        PayloadMode::Bytes => fs::read(&frame.source)
            .map(FramePayload::Bytes)
            .map_err(|e| Error::Resolution {
                locator: frame.source.clone(),
                reason: e.to_string(),
            }),
    }
}
