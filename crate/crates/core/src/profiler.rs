//! Latency and retained-state profiling.
//!
//! Retained bytes are accounted, not measured: an [`AccountingModel`] prices
//! each kept frame and each stored embedding, so curve shapes are exact and
//! testable on any machine.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::{request_from_bundle, Backend, BackendRequest, BackendResponse, GenerationParams};
use crate::embed::QueryText;
use crate::error::{Error, Result};
use crate::policy::{build_context, IndexBuilder, PolicyConfig, PolicyKind};
use crate::retrieval::chunk_frames;
use crate::scalar::Scalar;
use crate::stream::{FrameRef, PayloadMode, StreamTimeline};

/// Raw 448 x 448 RGB pixels, one byte per channel.
pub const DEFAULT_BYTES_PER_FRAME: u64 = 3 * 448 * 448;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccountingModel {
    pub bytes_per_frame_proxy: u64,
    pub bytes_per_embedding_dim: u64,
    /// Embedding width used when pricing a persistent index.
    pub index_dim: usize,
    pub fixed_overhead_bytes: u64,
    pub per_chunk_overhead_bytes: u64,
}

impl Default for AccountingModel {
    fn default() -> Self {
        Self {
            bytes_per_frame_proxy: DEFAULT_BYTES_PER_FRAME,
            bytes_per_embedding_dim: 4,
            index_dim: 512,
            fixed_overhead_bytes: 0,
            per_chunk_overhead_bytes: 0,
        }
    }
}

impl AccountingModel {
    pub fn frame_bytes(&self, frames: usize) -> u64 {
        frames as u64 * self.bytes_per_frame_proxy
    }

    pub fn index_bytes(&self, chunks: usize) -> u64 {
        chunks as u64 * (self.index_dim as u64 * self.bytes_per_embedding_dim + self.per_chunk_overhead_bytes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bytes_per_frame_proxy == 0 || self.bytes_per_embedding_dim == 0 || self.index_dim == 0 {
            return Err(Error::InvalidConfig(
                "accounting model: frame, embedding and index sizes must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Which clock produced a TTFT number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtftDefinition {
    /// `ttft_ms` reported by the server from its first generated token.
    ServerReported,
    /// Dispatch to first response byte, seen by the wire client.
    ClientFirstByte,
    /// Dispatch to return of an in-process backend call.
    InProcess,
}

impl TtftDefinition {
    pub fn as_str(self) -> &'static str {
        match self {
            TtftDefinition::ServerReported => "server_reported",
            TtftDefinition::ClientFirstByte => "client_first_byte",
            TtftDefinition::InProcess => "in_process",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySample {
    pub observed_frames: usize,
    pub ttft_ms: Option<f64>,
    pub ttft_definition: Option<TtftDefinition>,
    pub peak_retained_bytes: u64,
    pub policy_id: String,
    pub backend_id: String,
    /// Set when the measurement failed; such samples are dropped from reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtftMeasurement {
    pub median_ms: f64,
    pub definition: TtftDefinition,
    pub samples_ms: Vec<f64>,
}

pub const DEFAULT_TTFT_REPS: usize = 5;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Picks the best available TTFT for one call that took `elapsed_ms` in process.
pub fn ttft_of(response: &BackendResponse, elapsed_ms: f64) -> (f64, TtftDefinition) {
    match (response.ttft_ms, response.client_ttft_ms) {
        (Some(ms), _) => (ms, TtftDefinition::ServerReported),
        (None, Some(ms)) => (ms, TtftDefinition::ClientFirstByte),
        (None, None) => (elapsed_ms, TtftDefinition::InProcess),
    }
}

/// Median TTFT over `reps` sequential calls, on a monotonic clock.
///
/// A server-reported `ttft_ms` wins over the client's first-byte time, which
/// wins over the in-process elapsed time.
pub fn measure_ttft(backend: &dyn Backend, request: &BackendRequest, reps: usize) -> Result<TtftMeasurement> {
    if reps == 0 {
        return Err(Error::InvalidConfig("ttft repetitions must be at least 1".into()));
    }
    let mut samples = Vec::with_capacity(reps);
    let mut definition = TtftDefinition::InProcess;
    for _ in 0..reps {
        let t0 = Instant::now();
        let response = backend.answer(request)?;
        let (ms, def) = ttft_of(&response, t0.elapsed().as_secs_f64() * 1e3);
        definition = def;
        samples.push(ms);
    }
    let mut sorted = samples.clone();
    Ok(TtftMeasurement {
        median_ms: median(&mut sorted),
        definition,
        samples_ms: samples,
    })
}

/// Retained state after observing `observed` frames: the recent window, the
/// whole prefix, or the window plus a persistent chunk index.
fn retained_bytes(cfg: &PolicyConfig, observed: usize, acct: &AccountingModel, history: &[FrameRef<f32>]) -> Result<u64> {
    let bytes = match cfg.kind {
        PolicyKind::Recency => acct.frame_bytes(observed.min(cfg.n_recent)),
        PolicyKind::KeepAll => acct.frame_bytes(observed),
        PolicyKind::VisualRag => {
            let chunks = if history.is_empty() {
                0
            } else {
                chunk_frames(history, cfg.chunk_len)?.len()
            };
            acct.frame_bytes(observed.min(cfg.n_recent)) + acct.index_bytes(chunks)
        }
    };
    Ok(bytes + acct.fixed_overhead_bytes)
}

/// Accounted peak retained bytes at each stream length. Retention never
/// shrinks as a stream grows, so the peak is the state at the last frame.
pub fn memory_curve(cfg: &PolicyConfig, lengths: &[usize], acct: &AccountingModel) -> Result<Vec<EfficiencySample>> {
    cfg.validate()?;
    acct.validate()?;
    if lengths.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("stream lengths must be sorted ascending".into()));
    }
    let longest = lengths.last().copied().unwrap_or(0);
    let frames: Vec<FrameRef<f32>> = (0..longest)
        .map(|i| FrameRef::new(i, i as f64 / cfg.fps, String::new()))
        .collect();
    lengths
        .iter()
        .map(|&l| {
            let history = &frames[..l.saturating_sub(cfg.n_recent)];
            Ok(EfficiencySample {
                observed_frames: l,
                ttft_ms: None,
                ttft_definition: None,
                peak_retained_bytes: retained_bytes(cfg, l, acct, history)?,
                policy_id: cfg.policy_id().to_string(),
                backend_id: "accounting".into(),
                failure: None,
            })
        })
        .collect()
}

/// Inputs for a TTFT series. `builder` and `query` are needed for visual_rag.
pub struct TtftSeries<'a, T: Scalar = f32> {
    pub policy: &'a PolicyConfig,
    pub backend: &'a dyn Backend,
    pub builder: Option<&'a IndexBuilder<'a, T>>,
    pub query: Option<QueryText<'a>>,
    pub options: &'a [String],
    pub reps: usize,
    pub accounting: AccountingModel,
}

/// Measures TTFT at each observed length on a fresh synthetic stream, querying
/// at its last frame. Runs sequentially; failures become failure samples.
pub fn ttft_series<T: Scalar>(series: &TtftSeries<'_, T>, lengths: &[usize]) -> Vec<EfficiencySample> {
    let cfg = series.policy;
    lengths
        .iter()
        .map(|&l| {
            let mut sample = EfficiencySample {
                observed_frames: l,
                ttft_ms: None,
                ttft_definition: None,
                peak_retained_bytes: 0,
                policy_id: cfg.policy_id().to_string(),
                backend_id: series.backend.backend_id().to_string(),
                failure: None,
            };
            match measure_at(series, l) {
                Ok((m, bytes)) => {
                    sample.ttft_ms = Some(m.median_ms);
                    sample.ttft_definition = Some(m.definition);
                    sample.peak_retained_bytes = bytes;
                }
                Err(e) => sample.failure = Some(e.to_string()),
            }
            sample
        })
        .collect()
}

fn measure_at<T: Scalar>(series: &TtftSeries<'_, T>, observed: usize) -> Result<(TtftMeasurement, u64)> {
    let cfg = series.policy;
    if observed == 0 {
        return Err(Error::NoObservation { query_time_s: 0.0 });
    }
    let video_id = format!("profile-{observed}");
    let frames: Vec<FrameRef<T>> = (0..observed)
        .map(|i| FrameRef::new(i, i as f64 / cfg.fps, format!("frame://{video_id}/{i}")))
        .collect();
    let timeline = StreamTimeline {
        video_id: video_id.clone(),
        duration_s: (observed - 1) as f64 / cfg.fps,
        fps: cfg.fps,
        frames,
    };
    let prefix = timeline.visible_prefix(timeline.duration_s)?;
    let query_id = series.query.as_ref().map_or("profile", |q| q.question_id);
    let query = series.query.as_ref().map(|q| QueryText {
        question_id: q.question_id,
        video_id: &video_id,
        text: q.text,
    });
    let bundle = build_context(&prefix, cfg, query.as_ref(), series.builder)?;
    let request = request_from_bundle(
        query_id,
        query.as_ref().map_or("", |q| q.text),
        series.options,
        &bundle,
        PayloadMode::Ref,
        GenerationParams::default(),
    )?;
    let m = measure_ttft(series.backend, &request, series.reps)?;
    let history: Vec<FrameRef<f32>> = (0..observed.saturating_sub(cfg.n_recent))
        .map(|i| FrameRef::new(i, i as f64 / cfg.fps, String::new()))
        .collect();
    let bytes = retained_bytes(cfg, observed, &series.accounting, &history)?;
    Ok((m, bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub policy: String,
    pub backend: String,
    /// `[observed_frames, ttft_ms, peak_bytes]`; missing TTFT is null.
    pub points: Vec<(usize, Option<f64>, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub series: Vec<PlotSeries>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    pub rows: Vec<EfficiencySample>,
    pub csv: String,
    pub markdown: String,
    pub plot: PlotData,
}

impl EfficiencyReport {
    /// Writes `efficiency.csv`, `efficiency.md` and `efficiency_plot.json`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("efficiency.csv"), &self.csv)?;
        fs::write(dir.join("efficiency.md"), &self.markdown)?;
        let mut plot = serde_json::to_vec_pretty(&self.plot)?;
        plot.push(b'\n');
        fs::write(dir.join("efficiency_plot.json"), plot)?;
        Ok(())
    }
}

fn fmt_ms(ms: Option<f64>) -> String {
    ms.map_or_else(String::new, |v| format!("{v:.3}"))
}

/// Groups samples by (policy, backend) and renders CSV, markdown pivots in the
/// layout of a TTFT-by-frames table, and plot data. Failed samples are
/// dropped; nothing left is an error.
pub fn efficiency_report(samples: &[EfficiencySample]) -> Result<EfficiencyReport> {
    let mut rows: Vec<EfficiencySample> = samples.iter().filter(|s| s.failure.is_none()).cloned().collect();
    if rows.is_empty() {
        return Err(Error::NoSamples);
    }
    rows.sort_by(|a, b| {
        (&a.policy_id, &a.backend_id, a.observed_frames).cmp(&(&b.policy_id, &b.backend_id, b.observed_frames))
    });

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["policy", "backend", "observed_frames", "ttft_ms", "peak_bytes", "ttft_definition"])
        .map_err(csv_err)?;
    for s in &rows {
        w.write_record([
            s.policy_id.clone(),
            s.backend_id.clone(),
            s.observed_frames.to_string(),
            fmt_ms(s.ttft_ms),
            s.peak_retained_bytes.to_string(),
            s.ttft_definition.map_or("", |d| d.as_str()).to_string(),
        ])
        .map_err(csv_err)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| csv_err(e.into_error().into()))?)
        .expect("csv output is utf-8");

    let mut groups: BTreeMap<(String, String), Vec<&EfficiencySample>> = BTreeMap::new();
    for s in &rows {
        groups.entry((s.policy_id.clone(), s.backend_id.clone())).or_default().push(s);
    }
    let mut lengths: Vec<usize> = rows.iter().map(|s| s.observed_frames).collect();
    lengths.sort_unstable();
    lengths.dedup();

    let mut markdown = String::new();
    let header = |title: &str, md: &mut String| {
        let _ = writeln!(md, "### {title}\n");
        let _ = write!(md, "| policy | backend |");
        for l in &lengths {
            let _ = write!(md, " {l} |");
        }
        let _ = write!(md, "\n|---|---|");
        for _ in &lengths {
            let _ = write!(md, "---:|");
        }
        md.push('\n');
    };
    header("TTFT (ms) by observed frames", &mut markdown);
    for ((policy, backend), group) in &groups {
        let _ = write!(markdown, "| {policy} | {backend} |");
        for l in &lengths {
            let cell = group
                .iter()
                .find(|s| s.observed_frames == *l)
                .and_then(|s| s.ttft_ms)
                .map_or_else(|| "-".to_string(), |v| format!("{v:.0}"));
            let _ = write!(markdown, " {cell} |");
        }
        markdown.push('\n');
    }
    let defs: Vec<&str> = {
        let mut d: Vec<&str> = rows.iter().filter_map(|s| s.ttft_definition).map(|d| d.as_str()).collect();
        d.sort_unstable();
        d.dedup();
        d
    };
    if !defs.is_empty() {
        let _ = writeln!(markdown, "\nTTFT definition: {}", defs.join(", "));
    }
    markdown.push('\n');
    header("Peak retained state (MiB) by observed frames", &mut markdown);
    for ((policy, backend), group) in &groups {
        let _ = write!(markdown, "| {policy} | {backend} |");
        for l in &lengths {
            let cell = group
                .iter()
                .find(|s| s.observed_frames == *l)
                .map_or_else(|| "-".to_string(), |s| format!("{:.2}", s.peak_retained_bytes as f64 / (1024.0 * 1024.0)));
            let _ = write!(markdown, " {cell} |");
        }
        markdown.push('\n');
    }

    let plot = PlotData {
        series: groups
            .iter()
            .map(|((policy, backend), group)| PlotSeries {
                policy: policy.clone(),
                backend: backend.clone(),
                points: group
                    .iter()
                    .map(|s| (s.observed_frames, s.ttft_ms, s.peak_retained_bytes))
                    .collect(),
            })
            .collect(),
    };
    Ok(EfficiencyReport {
        rows,
        csv,
        markdown,
        plot,
    })
}
