//! Benchmark records, loaders, validation and synthetic generation.
//!
//! The native JSON form is the source of truth:
//!
//! ```json
//! {"name": "...", "category_map": {"OCR": "real_time", ...},
//!  "questions": [{"question_id", "video_id", "track", "question", "options",
//!                 "gold_option", "query_time_s"}],
//!  "grounding": {"<question_id>": {"evidence": [[a, b]], "beta": 0.005}},
//!  "videos": {"<video_id>": {"duration_s": 180.0}}}
//! ```
//!
//! `grounding` and `videos` are optional. The OVO-Bench and StreamingBench
//! adapters map their raw files onto this form.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::{Grounding, GroundingMap};
use crate::error::{Error, Finding, FindingKind, Result};

pub const OVO_REAL_TIME: [&str; 6] = ["OCR", "ACR", "ATR", "STU", "FPD", "OJR"];
pub const OVO_BACKWARD: [&str; 3] = ["EPM", "ASI", "HLD"];
/// Forward Active Responding tracks; loaded as out-of-scope findings.
pub const OVO_FORWARD: [&str; 3] = ["REC", "SSR", "CRR"];
pub const HALLUCINATION_TRACK: &str = "HLD";
pub const OVO_TOTAL_QUESTIONS: usize = 1640;
pub const OVO_TOTAL_TASKS: usize = 12;
pub const STREAMINGBENCH_TOTAL_QUESTIONS: usize = 2500;
pub const STREAMINGBENCH_TOTAL_TASKS: usize = 10;

pub const SYN_RT: &str = "SYN-RT";
pub const SYN_MEM: &str = "SYN-MEM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    RealTime,
    Backward,
    Other,
}

pub type CategoryMap = BTreeMap<String, Category>;

pub fn ovo_category_map() -> CategoryMap {
    OVO_REAL_TIME
        .iter()
        .map(|t| (t.to_string(), Category::RealTime))
        .chain(OVO_BACKWARD.iter().map(|t| (t.to_string(), Category::Backward)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub video_id: String,
    pub track: String,
    pub question: String,
    pub options: Vec<String>,
    pub gold_option: usize,
    pub query_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSet {
    pub name: String,
    pub category_map: CategoryMap,
    pub questions: Vec<QuestionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding: Option<GroundingMap>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub videos: BTreeMap<String, VideoMeta>,
}

impl BenchmarkSet {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn question(&self, id: &str) -> Option<&QuestionRecord> {
        self.questions.iter().find(|q| q.question_id == id)
    }

    /// Duration of `video_id`: declared, else the latest query time on it.
    pub fn video_duration(&self, video_id: &str) -> Option<f64> {
        self.videos.get(video_id).map(|v| v.duration_s).or_else(|| {
            self.questions
                .iter()
                .filter(|q| q.video_id == video_id)
                .map(|q| q.query_time_s)
                .reduce(f64::max)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchFormat {
    Native,
    Ovo,
    #[serde(rename = "streamingbench")]
    StreamingBench,
}

impl FromStr for BenchFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(BenchFormat::Native),
            "ovo" => Ok(BenchFormat::Ovo),
            "streamingbench" => Ok(BenchFormat::StreamingBench),
            other => Err(Error::InvalidConfig(format!("unknown benchmark format `{other}`"))),
        }
    }
}

/// A loaded set plus what the loader deliberately set aside.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub set: BenchmarkSet,
    /// Items skipped as out of scope (never errors).
    pub skipped: Vec<Finding>,
    /// Items in the source file.
    pub source_items: usize,
    /// Distinct track tags in the source file, evaluated or not.
    pub source_tracks: BTreeSet<String>,
}

impl Loaded {
    /// Guards adapters against silently mis-mapped files.
    pub fn check_counts(&self, items: usize, tracks: usize) -> Result<()> {
        let accounted = self.set.questions.len() + self.skipped.len();
        let mut findings = Vec::new();
        if accounted != self.source_items {
            findings.push(count_finding(format!(
                "{} records + {} skipped != {} source items",
                self.set.questions.len(),
                self.skipped.len(),
                self.source_items
            )));
        }
        if self.source_items != items {
            findings.push(count_finding(format!(
                "expected {items} questions, file has {}",
                self.source_items
            )));
        }
        if self.source_tracks.len() != tracks {
            findings.push(count_finding(format!(
                "expected {tracks} tracks, file has {}",
                self.source_tracks.len()
            )));
        }
        if findings.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(findings))
        }
    }
}

fn count_finding(message: String) -> Finding {
    Finding {
        question_id: None,
        kind: FindingKind::MalformedRecord,
        message,
    }
}

fn finding(id: &str, kind: FindingKind, message: impl Into<String>) -> Finding {
    Finding {
        question_id: Some(id.to_string()),
        kind,
        message: message.into(),
    }
}

pub fn load_benchmark(path: impl AsRef<Path>, format: BenchFormat) -> Result<Loaded> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "benchmark".into());
    parse_benchmark(&text, format, &name)
}

/// Parses benchmark text. `default_name` is used by formats that carry no name.
pub fn parse_benchmark(text: &str, format: BenchFormat, default_name: &str) -> Result<Loaded> {
    let root: Value = serde_json::from_str(text)?;
    match format {
        BenchFormat::Native => parse_native(root),
        BenchFormat::Ovo => parse_ovo(root, default_name),
        BenchFormat::StreamingBench => parse_streamingbench(root, default_name),
    }
}

/// Option index from an integer or a letter such as `"B"` or `"(B)"`.
fn parse_gold(v: &Value) -> Option<usize> {
    match v {
        Value::Number(n) => n.as_u64().map(|n| n as usize),
        Value::String(s) => {
            let t = s.trim().trim_start_matches('(').trim_end_matches([')', '.']);
            if let Ok(n) = t.parse::<usize>() {
                return Some(n);
            }
            let mut chars = t.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_alphabetic() => {
                    Some((c.to_ascii_uppercase() as u8 - b'A') as usize)
                }
                _ => None,
            }
        }
        _ => None,
    }
}

/// Seconds from a number or an `[[HH:]MM:]SS` string.
fn parse_time(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => {
            let mut total = 0.0;
            for part in s.trim().split(':') {
                total = total * 60.0 + part.trim().parse::<f64>().ok()?;
            }
            total.is_finite().then_some(total)
        }
        _ => None,
    }
}

fn str_field<'a>(obj: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| obj.get(*k).and_then(Value::as_str))
}

fn id_field(obj: &Value, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| match obj.get(*k)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    })
}

/// Common per-item checks; pushes findings and returns the record when clean.
struct RecordDraft<'a> {
    id: String,
    video_id: Option<&'a str>,
    track: Option<&'a str>,
    question: Option<&'a str>,
    options: Option<Vec<String>>,
    gold: Option<&'a Value>,
    time: Option<&'a Value>,
}

impl RecordDraft<'_> {
    fn finish(self, category_map: &CategoryMap, findings: &mut Vec<Finding>) -> Option<QuestionRecord> {
        let id = self.id;
        let before = findings.len();
        let track = self.track.unwrap_or_default();
        if !category_map.contains_key(track) {
            findings.push(finding(&id, FindingKind::UnknownTrack, format!("unknown track `{track}`")));
        }
        let options = self.options.unwrap_or_default();
        let gold = match self.gold {
            None | Some(Value::Null) => {
                findings.push(finding(&id, FindingKind::MissingGold, "no gold answer"));
                None
            }
            Some(v) => match parse_gold(v) {
                Some(g) if g < options.len() => Some(g),
                Some(g) => {
                    findings.push(finding(
                        &id,
                        FindingKind::GoldOutOfRange,
                        format!("gold option {g} but {} options", options.len()),
                    ));
                    None
                }
                None => {
                    findings.push(finding(&id, FindingKind::MissingGold, format!("unparseable gold {v}")));
                    None
                }
            },
        };
        let time = match self.time.map(parse_time) {
            Some(Some(t)) if t >= 0.0 => Some(t),
            Some(Some(t)) => {
                findings.push(finding(&id, FindingKind::NegativeQueryTime, format!("query time {t}")));
                None
            }
            _ => {
                findings.push(finding(&id, FindingKind::MalformedTime, "missing or malformed query time"));
                None
            }
        };
        let (Some(video_id), Some(question)) = (self.video_id, self.question) else {
            findings.push(finding(&id, FindingKind::MalformedRecord, "missing video or question text"));
            return None;
        };
        if findings.len() > before {
            return None;
        }
        Some(QuestionRecord {
            question_id: id,
            video_id: video_id.to_string(),
            track: track.to_string(),
            question: question.to_string(),
            options,
            gold_option: gold?,
            query_time_s: time?,
        })
    }
}

fn string_list(v: Option<&Value>) -> Option<Vec<String>> {
    v?.as_array()?
        .iter()
        .map(|o| o.as_str().map(str::to_string))
        .collect()
}

fn finish_load(
    set: BenchmarkSet,
    mut findings: Vec<Finding>,
    skipped: Vec<Finding>,
    source_items: usize,
    source_tracks: BTreeSet<String>,
) -> Result<Loaded> {
    let mut seen = HashSet::new();
    for q in &set.questions {
        if !seen.insert(q.question_id.as_str()) {
            findings.push(finding(&q.question_id, FindingKind::DuplicateId, "duplicate question id"));
        }
    }
    if !findings.is_empty() {
        return Err(Error::Validation(findings));
    }
    Ok(Loaded {
        set,
        skipped,
        source_items,
        source_tracks,
    })
}

fn parse_native(root: Value) -> Result<Loaded> {
    let name = str_field(&root, &["name"]).unwrap_or("benchmark").to_string();
    let category_map: CategoryMap = match root.get("category_map") {
        Some(v) => serde_json::from_value(v.clone())?,
        None => return Err(Error::InvalidInput("native benchmark lacks category_map".into())),
    };
    let grounding: Option<GroundingMap> = match root.get("grounding") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value(v.clone())?),
    };
    let videos: BTreeMap<String, VideoMeta> = match root.get("videos") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(v) => serde_json::from_value(v.clone())?,
    };
    let items = root
        .get("questions")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidInput("native benchmark lacks a questions array".into()))?;

    let mut findings = Vec::new();
    let mut questions = Vec::new();
    let mut tracks = BTreeSet::new();
    for (i, item) in items.iter().enumerate() {
        let id = id_field(item, &["question_id"]).unwrap_or_else(|| format!("#{i}"));
        let track = str_field(item, &["track"]);
        if let Some(t) = track {
            tracks.insert(t.to_string());
        }
        let draft = RecordDraft {
            id,
            video_id: str_field(item, &["video_id"]),
            track,
            question: str_field(item, &["question"]),
            options: string_list(item.get("options")),
            gold: item.get("gold_option"),
            time: item.get("query_time_s"),
        };
        if let Some(r) = draft.finish(&category_map, &mut findings) {
            questions.push(r);
        }
    }
    if let Some(g) = &grounding {
        for (qid, entry) in g {
            if let Err(e) = entry.validate(qid) {
                findings.push(finding(qid, FindingKind::MalformedRecord, e.to_string()));
            }
        }
    }
    let set = BenchmarkSet {
        name,
        category_map,
        questions,
        grounding,
        videos,
    };
    finish_load(set, findings, Vec::new(), items.len(), tracks)
}

fn parse_ovo(root: Value, name: &str) -> Result<Loaded> {
    let items = root
        .as_array()
        .ok_or_else(|| Error::InvalidInput("OVO-Bench file must be a JSON array".into()))?;
    let category_map = ovo_category_map();
    let mut findings = Vec::new();
    let mut skipped = Vec::new();
    let mut questions = Vec::new();
    let mut tracks = BTreeSet::new();
    for (i, item) in items.iter().enumerate() {
        let id = id_field(item, &["id", "question_id"]).unwrap_or_else(|| format!("#{i}"));
        let task = str_field(item, &["task", "track"]);
        if let Some(t) = task {
            tracks.insert(t.to_string());
        }
        if task.is_some_and(|t| OVO_FORWARD.contains(&t)) {
            skipped.push(finding(&id, FindingKind::OutOfScope, format!(
                "forward active responding track `{}` is not evaluated",
                task.unwrap_or_default()
            )));
            continue;
        }
        let draft = RecordDraft {
            id,
            video_id: str_field(item, &["video", "video_path", "video_id"]),
            track: task,
            question: str_field(item, &["question"]),
            options: string_list(item.get("options")),
            gold: item.get("gt").or_else(|| item.get("answer")),
            time: item.get("realtime").or_else(|| item.get("query_time_s")),
        };
        if let Some(r) = draft.finish(&category_map, &mut findings) {
            questions.push(r);
        }
    }
    let set = BenchmarkSet {
        name: name.to_string(),
        category_map,
        questions,
        grounding: None,
        videos: BTreeMap::new(),
    };
    finish_load(set, findings, skipped, items.len(), tracks)
}

fn parse_streamingbench(root: Value, name: &str) -> Result<Loaded> {
    let videos = root
        .as_array()
        .ok_or_else(|| Error::InvalidInput("StreamingBench file must be a JSON array".into()))?;
    let mut findings = Vec::new();
    let mut questions = Vec::new();
    let mut tracks = BTreeSet::new();
    let mut drafts = Vec::new();
    let mut source_items = 0;
    for (vi, video) in videos.iter().enumerate() {
        let video_id = str_field(video, &["video_id", "video_path", "video"]);
        let items = video.get("questions").and_then(Value::as_array);
        let Some(items) = items else {
            findings.push(count_finding(format!("video entry {vi} has no questions array")));
            continue;
        };
        for (qi, item) in items.iter().enumerate() {
            source_items += 1;
            let id = id_field(item, &["question_id", "id"])
                .unwrap_or_else(|| format!("{}#{qi}", video_id.unwrap_or("?")));
            let track = str_field(item, &["task_type", "task", "track"]);
            if let Some(t) = track {
                tracks.insert(t.to_string());
            }
            drafts.push(RecordDraft {
                id,
                video_id,
                track,
                question: str_field(item, &["question"]),
                options: string_list(item.get("options")),
                gold: item.get("answer").or_else(|| item.get("gt")),
                time: item.get("time_stamp").or_else(|| item.get("query_time_s")),
            });
        }
    }
    // Real-time visual understanding only: every task is a real-time track.
    let category_map: CategoryMap = tracks.iter().map(|t| (t.clone(), Category::RealTime)).collect();
    for d in drafts {
        if let Some(r) = d.finish(&category_map, &mut findings) {
            questions.push(r);
        }
    }
    let set = BenchmarkSet {
        name: name.to_string(),
        category_map,
        questions,
        grounding: None,
        videos: BTreeMap::new(),
    };
    finish_load(set, findings, Vec::new(), source_items, tracks)
}

/// Report-only checks over an in-memory set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

pub fn validate(set: &BenchmarkSet) -> ValidationReport {
    let mut findings = Vec::new();
    let mut seen = HashSet::new();
    for q in &set.questions {
        let id = &q.question_id;
        if !seen.insert(id.as_str()) {
            findings.push(finding(id, FindingKind::DuplicateId, "duplicate question id"));
        }
        if q.gold_option >= q.options.len() {
            findings.push(finding(
                id,
                FindingKind::GoldOutOfRange,
                format!("gold option {} but {} options", q.gold_option, q.options.len()),
            ));
        }
        if !set.category_map.contains_key(&q.track) {
            findings.push(finding(
                id,
                FindingKind::UnmappedTrack,
                format!("track `{}` is not in the category map", q.track),
            ));
        }
        if !(q.query_time_s >= 0.0) {
            findings.push(finding(id, FindingKind::NegativeQueryTime, format!("query time {}", q.query_time_s)));
        }
        if let Some(meta) = set.videos.get(&q.video_id) {
            if q.query_time_s > meta.duration_s {
                findings.push(finding(
                    id,
                    FindingKind::QueryBeyondDuration,
                    format!("query at {}s but video lasts {}s", q.query_time_s, meta.duration_s),
                ));
            }
        }
    }
    ValidationReport { findings }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistanceDist {
    Fixed { d: f64 },
    /// Uniform over the frame-grid points in `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub n_questions: usize,
    /// Seconds from the end of a SYN-MEM evidence interval to its query.
    pub distance: DistanceDist,
    /// SYN-RT evidence lies within this many seconds before the query.
    pub recent_window_truth_s: f64,
    pub stream_len_s: f64,
    pub evidence_width_s: f64,
    pub fps: f64,
    pub beta: f64,
    pub n_options: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n_questions: 100,
            distance: DistanceDist::Uniform { lo: 10.0, hi: 100.0 },
            recent_window_truth_s: 2.0,
            stream_len_s: 180.0,
            evidence_width_s: 2.0,
            fps: 1.0,
            beta: 0.005,
            n_options: 4,
        }
    }
}

const GRID_EPS: f64 = 1e-9;

/// Generates two symbolic tracks with known grounding, one video per
/// question, deterministic in `seed`:
///
/// * `SYN-RT`: a single evidence instant within the last
///   `recent_window_truth_s` seconds before the query.
/// * `SYN-MEM`: an evidence interval of `evidence_width_s` ending exactly `d`
///   seconds before the query.
///
/// Even-numbered questions are SYN-RT, odd ones SYN-MEM. All times lie on the
/// `1 / fps` grid; distances are quantized to it.
pub fn gen_synthetic(seed: u64, params: &SyntheticParams) -> Result<BenchmarkSet> {
    let fps = params.fps;
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(Error::InvalidConfig("fps must be positive".into()));
    }
    if params.n_options < 2 {
        return Err(Error::InvalidConfig("synthetic questions need at least 2 options".into()));
    }
    if !(params.stream_len_s >= 0.0) || !(params.evidence_width_s >= 0.0) || !(params.beta >= 0.0) {
        return Err(Error::InvalidConfig("stream length, evidence width and beta must be non-negative".into()));
    }
    let last_frame = (params.stream_len_s * fps + GRID_EPS).floor() as u64;
    let width = (params.evidence_width_s * fps).round() as u64;
    let rt_span = ((params.recent_window_truth_s * fps).round() as u64).max(1);
    let (d_lo, d_hi) = match params.distance {
        DistanceDist::Fixed { d } => {
            let j = (d * fps).round();
            if (j / fps - d).abs() > 1e-9 || d < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "fixed distance {d}s is not on the 1/{fps}s frame grid"
                )));
            }
            (j as u64, j as u64)
        }
        DistanceDist::Uniform { lo, hi } => {
            if !(0.0 <= lo && lo <= hi) {
                return Err(Error::InvalidConfig(format!("bad distance range [{lo}, {hi}]")));
            }
            let a = (lo * fps - GRID_EPS).ceil() as u64;
            let b = (hi * fps + GRID_EPS).floor() as u64;
            if a > b {
                return Err(Error::InvalidConfig(format!("no grid point in [{lo}, {hi}]")));
            }
            (a, b)
        }
    };
    if d_hi + width > last_frame {
        return Err(Error::InvalidConfig(format!(
            "planted distance up to {}s plus {}s of evidence exceeds the {}s stream",
            d_hi as f64 / fps,
            params.evidence_width_s,
            params.stream_len_s
        )));
    }
    if rt_span - 1 > last_frame {
        return Err(Error::InvalidConfig("recent window truth exceeds the stream".into()));
    }

    let at = |frame: u64| frame as f64 / fps;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let options: Vec<String> = (0..params.n_options)
        .map(|j| format!("option {}", char::from(b'A' + (j % 26) as u8)))
        .collect();
    let mut questions = Vec::with_capacity(params.n_questions);
    let mut grounding = GroundingMap::new();
    let mut videos = BTreeMap::new();
    for i in 0..params.n_questions {
        let question_id = format!("syn-{i:06}");
        let video_id = format!("syn-video-{i:06}");
        let (track, question, q, evidence) = if i % 2 == 0 {
            let e = rng.random_range(0..rt_span);
            let q = rng.random_range(e..=last_frame);
            (SYN_RT, "What is happening right now?", q, [at(q - e), at(q - e)])
        } else {
            let d = rng.random_range(d_lo..=d_hi);
            let q = rng.random_range(d + width..=last_frame);
            (
                SYN_MEM,
                "What happened during the marked event earlier in the stream?",
                q,
                [at(q - d - width), at(q - d)],
            )
        };
        let gold_option = rng.random_range(0..params.n_options);
        grounding.insert(
            question_id.clone(),
            Grounding {
                evidence: vec![evidence],
                beta: params.beta,
            },
        );
        videos.insert(
            video_id.clone(),
            VideoMeta {
                duration_s: params.stream_len_s,
            },
        );
        questions.push(QuestionRecord {
            question_id,
            video_id,
            track: track.to_string(),
            question: question.to_string(),
            options: options.clone(),
            gold_option,
            query_time_s: at(q),
        });
    }
    Ok(BenchmarkSet {
        name: format!("synthetic-seed{seed}"),
        category_map: CategoryMap::from([
            (SYN_RT.to_string(), Category::RealTime),
            (SYN_MEM.to_string(), Category::Backward),
        ]),
        questions,
        grounding: Some(grounding),
        videos,
    })
}

/// Planted evidence-to-query distance of each SYN-MEM question.
pub fn planted_distances(set: &BenchmarkSet) -> Vec<(String, f64)> {
    let Some(grounding) = &set.grounding else {
        return Vec::new();
    };
    set.questions
        .iter()
        .filter(|q| q.track == SYN_MEM)
        .filter_map(|q| {
            let end = grounding.get(&q.question_id)?.evidence.first()?[1];
            Some((q.question_id.clone(), q.query_time_s - end))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn native_fixture() -> String {
        serde_json::json!({
            "name": "fixture",
            "category_map": {"OCR": "real_time", "EPM": "backward"},
            "questions": [
                {"question_id": "a", "video_id": "v1", "track": "OCR", "question": "q?",
                 "options": ["x", "y"], "gold_option": 1, "query_time_s": 3.0},
                {"question_id": "b", "video_id": "v1", "track": "EPM", "question": "q?",
                 "options": ["x", "y", "z"], "gold_option": "C", "query_time_s": 5},
                {"question_id": "c", "video_id": "v2", "track": "OCR", "question": "q?",
                 "options": ["x", "y"], "gold_option": 0, "query_time_s": "00:01:05"}
            ]
        })
        .to_string()
    }

    #[test]
    fn native_fixture_loads() {
        let loaded = parse_benchmark(&native_fixture(), BenchFormat::Native, "x").unwrap();
        let ids: Vec<&str> = loaded.set.questions.iter().map(|q| q.question_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(loaded.set.questions[1].gold_option, 2);
        assert_eq!(loaded.set.questions[2].query_time_s, 65.0);
        assert!(validate(&loaded.set).is_clean());
    }

    #[test]
    fn negative_time_is_itemized() {
        let text = native_fixture().replace("\"query_time_s\":3.0", "\"query_time_s\":-1");
        let err = parse_benchmark(&text, BenchFormat::Native, "x").unwrap_err();
        match err {
            Error::Validation(f) => {
                assert_eq!(f.len(), 1);
                assert_eq!(f[0].kind, FindingKind::NegativeQueryTime);
                assert_eq!(f[0].question_id.as_deref(), Some("a"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn every_bad_item_is_reported() {
        let text = serde_json::json!({
            "name": "bad",
            "category_map": {"OCR": "real_time"},
            "questions": [
                {"question_id": "a", "video_id": "v", "track": "XYZ", "question": "?",
                 "options": ["x"], "gold_option": 0, "query_time_s": 1},
                {"question_id": "b", "video_id": "v", "track": "OCR", "question": "?",
                 "options": ["x"], "query_time_s": 1},
                {"question_id": "c", "video_id": "v", "track": "OCR", "question": "?",
                 "options": ["x"], "gold_option": 0, "query_time_s": "soon"},
                {"question_id": "d", "video_id": "v", "track": "OCR", "question": "?",
                 "options": ["x"], "gold_option": 4, "query_time_s": 1},
                {"question_id": "e", "video_id": "v", "track": "OCR", "question": "?",
                 "options": ["x"], "gold_option": 0, "query_time_s": 1},
                {"question_id": "e", "video_id": "v", "track": "OCR", "question": "?",
                 "options": ["x"], "gold_option": 0, "query_time_s": 2}
            ]
        })
        .to_string();
        let Err(Error::Validation(f)) = parse_benchmark(&text, BenchFormat::Native, "x") else {
            panic!("expected validation failure");
        };
        let kinds: Vec<FindingKind> = f.iter().map(|f| f.kind).collect();
        assert_eq!(
            kinds,
            [
                FindingKind::UnknownTrack,
                FindingKind::MissingGold,
                FindingKind::MalformedTime,
                FindingKind::GoldOutOfRange,
                FindingKind::DuplicateId
            ]
        );
    }

    #[test]
    fn ovo_adapter_maps_and_skips_forward() {
        let text = serde_json::json!([
            {"id": 1, "task": "OCR", "video": "a.mp4", "realtime": 12.0, "question": "?",
             "options": ["p", "q"], "gt": 1},
            {"id": 2, "task": "EPM", "video": "b.mp4", "realtime": "00:30", "question": "?",
             "options": ["p", "q", "r"], "gt": "A"},
            {"id": 3, "task": "REC", "video": "c.mp4", "test_info": []}
        ])
        .to_string();
        let loaded = parse_benchmark(&text, BenchFormat::Ovo, "ovo").unwrap();
        assert_eq!(loaded.set.questions.len(), 2);
        assert_eq!(loaded.skipped.len(), 1);
        assert_eq!(loaded.skipped[0].kind, FindingKind::OutOfScope);
        assert_eq!(loaded.set.questions[1].query_time_s, 30.0);
        assert_eq!(loaded.set.category_map.get("EPM"), Some(&Category::Backward));
        assert_eq!(loaded.set.category_map.get("STU"), Some(&Category::RealTime));
        assert!(loaded.check_counts(3, 3).is_ok());
        assert!(loaded.check_counts(OVO_TOTAL_QUESTIONS, OVO_TOTAL_TASKS).is_err());
    }

    #[test]
    fn ovo_count_guard_on_full_sized_file() {
        let all: Vec<&str> = OVO_REAL_TIME
            .iter()
            .chain(&OVO_BACKWARD)
            .chain(&OVO_FORWARD)
            .copied()
            .collect();
        let items: Vec<Value> = (0..OVO_TOTAL_QUESTIONS)
            .map(|i| {
                serde_json::json!({"id": i, "task": all[i % all.len()], "video": "v.mp4",
                    "realtime": 10, "question": "?", "options": ["a", "b"], "gt": 0})
            })
            .collect();
        let loaded = parse_benchmark(&Value::Array(items).to_string(), BenchFormat::Ovo, "ovo").unwrap();
        loaded.check_counts(OVO_TOTAL_QUESTIONS, OVO_TOTAL_TASKS).unwrap();
        assert_eq!(loaded.set.questions.len() + loaded.skipped.len(), OVO_TOTAL_QUESTIONS);
        let evaluated: BTreeSet<&str> = loaded.set.questions.iter().map(|q| q.track.as_str()).collect();
        assert_eq!(evaluated.len(), 9);
    }

    #[test]
    fn streamingbench_adapter() {
        let text = serde_json::json!([
            {"video_path": "s1.mp4", "questions": [
                {"task_type": "Object Perception", "question": "?", "time_stamp": "00:03:10",
                 "options": ["A. x", "B. y", "C. z", "D. w"], "answer": "B"},
                {"task_type": "Counting", "question": "?", "time_stamp": "00:00:05",
                 "options": ["A. 1", "B. 2"], "answer": "A"}
            ]}
        ])
        .to_string();
        let loaded = parse_benchmark(&text, BenchFormat::StreamingBench, "sb").unwrap();
        let q = &loaded.set.questions[0];
        assert_eq!((q.gold_option, q.query_time_s), (1, 190.0));
        assert_eq!(q.question_id, "s1.mp4#0");
        assert!(loaded.set.category_map.values().all(|c| *c == Category::RealTime));
        loaded.check_counts(2, 2).unwrap();
    }

    #[test]
    fn validate_reports_each_problem() {
        let mut set = parse_benchmark(&native_fixture(), BenchFormat::Native, "x").unwrap().set;
        assert!(validate(&set).is_clean());

        let mut dup = set.clone();
        dup.questions.push(dup.questions[0].clone());
        let r = validate(&dup);
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.findings[0].kind, FindingKind::DuplicateId);

        let mut unmapped = set.clone();
        unmapped.questions[0].track = "XYZ".into();
        let r = validate(&unmapped);
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.findings[0].kind, FindingKind::UnmappedTrack);

        set.videos.insert("v2".into(), VideoMeta { duration_s: 60.0 });
        set.questions[0].gold_option = 9;
        let kinds: Vec<_> = validate(&set).findings.iter().map(|f| f.kind).collect();
        assert_eq!(kinds, [FindingKind::GoldOutOfRange, FindingKind::QueryBeyondDuration]);
    }

    #[test]
    fn fixed_distance_is_exact() {
        let params = SyntheticParams {
            n_questions: 100,
            distance: DistanceDist::Fixed { d: 30.0 },
            ..SyntheticParams::default()
        };
        let set = gen_synthetic(7, &params).unwrap();
        let d = planted_distances(&set);
        assert_eq!(d.len(), 50);
        assert!(d.iter().all(|(_, d)| *d == 30.0));
        assert!(validate(&set).is_clean());
        let g = set.grounding.as_ref().unwrap();
        for q in set.questions.iter().filter(|q| q.track == SYN_RT) {
            let iv = g[&q.question_id].evidence[0];
            assert!(q.query_time_s - iv[1] < params.recent_window_truth_s);
            assert!(iv[1] <= q.query_time_s);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let p = SyntheticParams::default();
        assert_eq!(
            gen_synthetic(7, &p).unwrap().to_json().unwrap(),
            gen_synthetic(7, &p).unwrap().to_json().unwrap()
        );
        assert_ne!(
            gen_synthetic(7, &p).unwrap().to_json().unwrap(),
            gen_synthetic(8, &p).unwrap().to_json().unwrap()
        );
    }

    #[test]
    fn uniform_distance_mean() {
        let p = SyntheticParams {
            n_questions: 20_000,
            distance: DistanceDist::Uniform { lo: 10.0, hi: 100.0 },
            ..SyntheticParams::default()
        };
        let d = planted_distances(&gen_synthetic(3, &p).unwrap());
        assert_eq!(d.len(), 10_000);
        let mean = d.iter().map(|(_, d)| d).sum::<f64>() / d.len() as f64;
        assert!((mean - 55.0).abs() <= 2.0, "mean {mean}");
        assert!(d.iter().all(|(_, d)| (10.0..=100.0).contains(d)));
    }

    #[test]
    fn distance_beyond_stream_is_rejected() {
        let p = SyntheticParams {
            distance: DistanceDist::Fixed { d: 500.0 },
            ..SyntheticParams::default()
        };
        assert!(matches!(gen_synthetic(1, &p), Err(Error::InvalidConfig(_))));
        let off_grid = SyntheticParams {
            distance: DistanceDist::Fixed { d: 2.5 },
            ..SyntheticParams::default()
        };
        assert!(gen_synthetic(1, &off_grid).is_err());
    }

    #[test]
    fn native_round_trip_preserves_synthetic_set() {
        let set = gen_synthetic(11, &SyntheticParams { n_questions: 10, ..Default::default() }).unwrap();
        let text = String::from_utf8(set.to_json().unwrap()).unwrap();
        let back = parse_benchmark(&text, BenchFormat::Native, "x").unwrap();
        assert_eq!(back.set, set);
    }
}
