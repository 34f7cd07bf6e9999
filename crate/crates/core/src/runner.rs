//! End-to-end runs: configuration, orchestration, sweeps and reports.
//!
//! A run loads (or generates) a benchmark, builds each question's causal
//! context under one policy, dispatches it to one backend from a bounded
//! worker pool, streams per-question records to `responses.jsonl` through a
//! single writer, then scores. Output layout under `out_dir/run_id/`:
//!
//! * `config.json` - the resolved configuration
//! * `responses.jsonl` - one record per question, rewritten in benchmark order
//! * `results.json`, `results.csv`, `report.md`
//! * `efficiency.*` when a profile section is configured
//!
//! `results.json` carries no timings, so mock-backed runs reproduce it byte
//! for byte.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::{
    request_from_bundle, Backend, EndpointConfig, GenerationParams, HttpBackend, HttpEmbedder, MockBackend,
    MockDelay,
};
use crate::bench::{self, gen_synthetic, load_benchmark, BenchFormat, BenchmarkSet, QuestionRecord, SyntheticParams};
use crate::embed::{Embedder, GroundedEmbedder, QueryText};
use crate::error::{Error, Result};
use crate::policy::{build_context, context_budget_with, IndexBuilder, IndexCache, PolicyConfig, PolicyKind};
use crate::profiler::{self, AccountingModel, TtftDefinition, TtftSeries};
use crate::scoring::{self, MissingPolicy, ResultsFile};
use crate::stream::{sample_timeline, PayloadMode};

/// Prefix of environment variables that override config values.
pub const ENV_PREFIX: &str = "STREAMCTX_";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSource {
    pub path: Option<PathBuf>,
    pub format: Option<BenchFormat>,
    /// Generate a synthetic set from the run seed instead of loading one.
    pub synthetic: Option<SyntheticParams>,
    /// Check the loaded file against the format's published size.
    pub check_counts: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSection {
    /// Overrides every question's distraction coefficient.
    pub beta: Option<f64>,
    pub recent_window: Option<usize>,
    pub delay_ms: Option<f64>,
    pub per_frame_delay_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub mock: Option<MockSection>,
    pub http: Option<EndpointConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    /// Grounding-derived embeddings; needs a benchmark with a grounding map.
    #[default]
    Synthetic,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSection {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub http: Option<EndpointConfig>,
}

impl Default for EmbedderSection {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Synthetic,
            dim: 64,
            http: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub lengths: Vec<usize>,
    pub reps: usize,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            lengths: vec![16, 64, 256],
            reps: profiler::DEFAULT_TTFT_REPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    pub concurrency: usize,
    pub out_dir: PathBuf,
    /// Abort on the first backend failure instead of scoring it wrong.
    pub strict: bool,
    /// Require every mapped real-time and backward track to be scored.
    pub strict_tracks: bool,
    /// Skip questions already answered in an existing `responses.jsonl`.
    pub resume: bool,
    /// Results file of the reference run for ΔP and ΔM.
    pub reference: Option<PathBuf>,
    pub benchmark: BenchmarkSource,
    pub policy: PolicyConfig,
    /// Values of `n_recent` for `sweep`.
    pub sweep: Option<Vec<usize>>,
    pub backend: BackendSection,
    pub embedder: EmbedderSection,
    pub accounting: AccountingModel,
    pub generation: GenerationParams,
    pub profile: Option<ProfileSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            seed: 0,
            concurrency: 4,
            out_dir: PathBuf::from("runs"),
            strict: false,
            strict_tracks: false,
            resume: true,
            reference: None,
            benchmark: BenchmarkSource::default(),
            policy: PolicyConfig::default(),
            sweep: None,
            backend: BackendSection::default(),
            embedder: EmbedderSection::default(),
            accounting: AccountingModel::default(),
            generation: GenerationParams::default(),
            profile: None,
        }
    }
}

fn parse_env<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse `{value}`")))
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`. Relative benchmark
    /// and reference paths resolve against the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.benchmark.path.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.reference.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    /// Applies `STREAMCTX_*` overrides: `RUN_ID`, `SEED`, `CONCURRENCY`,
    /// `OUT_DIR`, `STRICT`, `REFERENCE`, `BACKEND_URL`, `EMBEDDER_URL`.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            match name {
                "RUN_ID" => self.run_id = value,
                "SEED" => self.seed = parse_env(&key, &value)?,
                "CONCURRENCY" => self.concurrency = parse_env(&key, &value)?,
                "OUT_DIR" => self.out_dir = PathBuf::from(value),
                "STRICT" => self.strict = parse_env(&key, &value)?,
                "REFERENCE" => self.reference = Some(PathBuf::from(value)),
                "BACKEND_URL" => self.backend.http.get_or_insert_with(EndpointConfig::default).url = value,
                "EMBEDDER_URL" => self.embedder.http.get_or_insert_with(EndpointConfig::default).url = value,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return bad("run_id must be a non-empty file name");
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1");
        }
        match (&self.backend.mock, &self.backend.http) {
            (Some(_), Some(_)) => return bad("configure exactly one backend, not both mock and http"),
            (None, None) => return bad("configure exactly one backend (mock or http)"),
            _ => {}
        }
        match (&self.benchmark.path, &self.benchmark.synthetic) {
            (Some(_), Some(_)) => return bad("benchmark: give either a path or synthetic parameters, not both"),
            (None, None) => return bad("benchmark: a path or synthetic parameters are required"),
            _ => {}
        }
        if self.sweep.as_ref().is_some_and(|s| s.is_empty()) {
            return bad("sweep list must not be empty");
        }
        if self.embedder.kind == EmbedderKind::Http && self.embedder.http.is_none() {
            return bad("embedder kind http needs an [embedder.http] endpoint");
        }
        if let Some(m) = &self.backend.mock {
            for d in [m.delay_ms, m.per_frame_delay_ms].into_iter().flatten() {
                if !(d >= 0.0) || !d.is_finite() {
                    return bad("mock delays must be finite and non-negative");
                }
            }
        }
        if let Some(p) = &self.profile {
            if p.reps == 0 || p.lengths.is_empty() {
                return bad("profile needs at least one length and one repetition");
            }
        }
        self.accounting.validate()?;
        self.policy.validate()
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(&self.run_id)
    }
}

/// One answered (or failed) question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub question_id: String,
    pub track: String,
    pub query_time_s: f64,
    pub chosen_option: Option<usize>,
    pub correct: bool,
    #[serde(default)]
    pub answer_text: Option<String>,
    pub observed_frames: usize,
    pub context_frames: usize,
    pub retrieved_frames: usize,
    pub retained_bytes: u64,
    pub ttft_ms: Option<f64>,
    pub ttft_definition: Option<TtftDefinition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn load_benchmark_for(cfg: &RunConfig) -> Result<BenchmarkSet> {
    if let Some(params) = &cfg.benchmark.synthetic {
        return gen_synthetic(cfg.seed, params);
    }
    let path = cfg.benchmark.path.as_ref().expect("validated");
    let format = cfg.benchmark.format.unwrap_or(BenchFormat::Native);
    let loaded = load_benchmark(path, format)?;
    if cfg.benchmark.check_counts {
        match format {
            BenchFormat::Ovo => loaded.check_counts(bench::OVO_TOTAL_QUESTIONS, bench::OVO_TOTAL_TASKS)?,
            BenchFormat::StreamingBench => loaded.check_counts(
                bench::STREAMINGBENCH_TOTAL_QUESTIONS,
                bench::STREAMINGBENCH_TOTAL_TASKS,
            )?,
            BenchFormat::Native => {}
        }
    }
    let report = bench::validate(&loaded.set);
    if !report.is_clean() {
        return Err(Error::Validation(report.findings));
    }
    Ok(loaded.set)
}

fn ms(d: f64) -> Duration {
    Duration::from_secs_f64(d / 1e3)
}

fn make_backend(cfg: &RunConfig, set: &BenchmarkSet) -> Result<Box<dyn Backend>> {
    if let Some(http) = &cfg.backend.http {
        return Ok(Box::new(HttpBackend::new(http.clone())?));
    }
    let m = cfg.backend.mock.as_ref().expect("validated");
    let mut mock = MockBackend::from_benchmark(set, cfg.seed)?;
    if let Some(beta) = m.beta {
        mock = mock.with_beta(beta)?;
    }
    if let Some(n) = m.recent_window {
        mock = mock.with_recent_window(n);
    }
    match (m.delay_ms, m.per_frame_delay_ms) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig("mock: set delay_ms or per_frame_delay_ms, not both".into()))
        }
        (Some(d), None) => mock = mock.with_delay(MockDelay::Fixed(ms(d))),
        (None, Some(d)) => mock = mock.with_delay(MockDelay::PerFrame(ms(d))),
        (None, None) => {}
    }
    Ok(Box::new(mock))
}

fn make_embedder(cfg: &RunConfig, set: &BenchmarkSet) -> Result<Option<Box<dyn Embedder<f32>>>> {
    if cfg.policy.kind != PolicyKind::VisualRag {
        return Ok(None);
    }
    Ok(Some(match cfg.embedder.kind {
        EmbedderKind::Synthetic => Box::new(GroundedEmbedder::from_benchmark(set, cfg.embedder.dim, cfg.seed)?),
        EmbedderKind::Http => Box::new(HttpEmbedder::new(
            cfg.embedder.http.clone().expect("validated"),
            cfg.embedder.dim,
        )?),
    }))
}

fn frame_mode(cfg: &RunConfig) -> PayloadMode {
    cfg.backend.http.as_ref().map_or(PayloadMode::Ref, |h| h.frame_mode)
}

/// Builds, dispatches and records one question. Only causality violations
/// and configuration errors escape; backend failures become error records.
fn answer_one(
    cfg: &RunConfig,
    set: &BenchmarkSet,
    q: &QuestionRecord,
    backend: &dyn Backend,
    builder: Option<&IndexBuilder<'_, f32>>,
) -> Result<QuestionResult> {
    let duration = set.video_duration(&q.video_id).unwrap_or(q.query_time_s).max(q.query_time_s);
    let timeline = sample_timeline::<f32>(&q.video_id, duration, cfg.policy.fps)?;
    let prefix = timeline.visible_prefix(q.query_time_s)?;
    let query = QueryText {
        question_id: &q.question_id,
        video_id: &q.video_id,
        text: &q.question,
    };
    let mut record = QuestionResult {
        question_id: q.question_id.clone(),
        track: q.track.clone(),
        query_time_s: q.query_time_s,
        chosen_option: None,
        correct: false,
        answer_text: None,
        observed_frames: prefix.len(),
        context_frames: 0,
        retrieved_frames: 0,
        retained_bytes: 0,
        ttft_ms: None,
        ttft_definition: None,
        error: None,
    };
    let bundle = match build_context(&prefix, &cfg.policy, Some(&query), builder) {
        Ok(b) => b,
        Err(e @ (Error::NoObservation { .. } | Error::Backend { .. } | Error::IndexBuild(_))) => {
            record.error = Some(e.to_string());
            return Ok(record);
        }
        Err(e) => return Err(e),
    };
    let budget = context_budget_with(&bundle, &cfg.accounting);
    record.context_frames = budget.frame_count + budget.retrieved_frame_count;
    record.retrieved_frames = budget.retrieved_frame_count;
    record.retained_bytes = budget.retained_bytes;
    let request = request_from_bundle(
        &q.question_id,
        &q.question,
        &q.options,
        &bundle,
        frame_mode(cfg),
        cfg.generation,
    )?;
    let t0 = Instant::now();
    match backend.answer(&request) {
        Ok(resp) => {
            let (ttft, def) = profiler::ttft_of(&resp, t0.elapsed().as_secs_f64() * 1e3);
            record.ttft_ms = Some(ttft);
            record.ttft_definition = Some(def);
            record.correct = resp.chosen_option == Some(q.gold_option);
            record.chosen_option = resp.chosen_option;
            record.answer_text = Some(resp.answer_text);
        }
        Err(e @ Error::Causality { .. }) => return Err(e),
        Err(e) => record.error = Some(e.to_string()),
    }
    Ok(record)
}

fn read_completed(path: &Path) -> Result<Vec<QuestionResult>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for line in BufReader::new(fs::File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // A torn last line from an interrupted run is simply redone.
        if let Ok(r) = serde_json::from_str::<QuestionResult>(&line) {
            if r.error.is_none() {
                out.push(r);
            }
        }
    }
    Ok(out)
}

fn write_lines(path: &Path, records: &[QuestionResult]) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub results: ResultsFile,
    pub records: Vec<QuestionResult>,
}

/// Executes one run and writes its files.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let set = load_benchmark_for(cfg)?;
    let backend = make_backend(cfg, &set)?;
    let embedder = make_embedder(cfg, &set)?;
    let cache = IndexCache::<f32>::new();
    let builder = embedder.as_deref().map(|e| {
        if cfg.policy.index_cache {
            IndexBuilder::with_cache(e, &cache)
        } else {
            IndexBuilder::new(e)
        }
    });
    let reference = cfg.reference.as_ref().map(ResultsFile::load).transpose()?;

    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("config.json"), cfg)?;
    if cfg.benchmark.synthetic.is_some() {
        set.save(dir.join("benchmark.json"))?;
    }
    let jsonl = dir.join("responses.jsonl");
    let mut completed = if cfg.resume { read_completed(&jsonl)? } else { Vec::new() };
    let known: HashSet<&str> = set.questions.iter().map(|q| q.question_id.as_str()).collect();
    completed.retain(|r| known.contains(r.question_id.as_str()));
    let done: HashSet<String> = completed.iter().map(|r| r.question_id.clone()).collect();
    write_lines(&jsonl, &completed)?;
    let todo: Vec<&QuestionRecord> = set.questions.iter().filter(|q| !done.contains(&q.question_id)).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let (tx, rx) = mpsc::channel::<QuestionResult>();
    let mut fresh = std::thread::scope(|s| -> Result<Vec<QuestionResult>> {
        let writer = s.spawn(|| -> Result<Vec<QuestionResult>> {
            let mut w = BufWriter::new(fs::OpenOptions::new().append(true).open(&jsonl)?);
            let mut got = Vec::new();
            for r in rx {
                serde_json::to_writer(&mut w, &r)?;
                w.write_all(b"\n")?;
                w.flush()?;
                got.push(r);
            }
            Ok(got)
        });
        let work = pool.install(|| {
            todo.par_iter().try_for_each_with(tx, |tx, q| {
                let r = answer_one(cfg, &set, q, backend.as_ref(), builder.as_ref())?;
                if cfg.strict {
                    if let Some(e) = &r.error {
                        return Err(Error::backend(format!("question {}: {e}", r.question_id), false, 1));
                    }
                }
                tx.send(r).map_err(|_| Error::InvalidInput("result writer stopped".into()))
            })
        });
        let written = writer.join().expect("writer thread panicked")?;
        work.map(|()| written)
    })?;

    let mut records = completed;
    records.append(&mut fresh);
    let order: BTreeMap<&str, usize> = set
        .questions
        .iter()
        .enumerate()
        .map(|(i, q)| (q.question_id.as_str(), i))
        .collect();
    records.sort_by_key(|r| order[r.question_id.as_str()]);
    write_lines(&jsonl, &records)?;

    let scores = scoring::score_choices(
        records.iter().map(|r| (r.question_id.as_str(), r.chosen_option)),
        &set,
        MissingPolicy::Strict,
    )?;
    let mut results = ResultsFile::new(
        &cfg.run_id,
        cfg.policy.policy_id(),
        backend.backend_id(),
        &set.name,
        &scores,
        &set.category_map,
        cfg.strict_tracks,
    )?;
    results.n_failed = records.iter().filter(|r| r.error.is_some()).count();
    if let Some(r) = &reference {
        results.apply_reference(r)?;
    }
    results.save(dir.join("results.json"))?;
    let report = scoring::comparison_report(std::slice::from_ref(&results), None)?;
    fs::write(dir.join("results.csv"), &report.csv)?;
    fs::write(dir.join("report.md"), &report.markdown)?;

    if let Some(profile) = &cfg.profile {
        let first = set.questions.first();
        let options = first.map(|q| q.options.clone()).unwrap_or_default();
        let series = TtftSeries {
            policy: &cfg.policy,
            backend: backend.as_ref(),
            builder: builder.as_ref(),
            query: first.map(|q| QueryText {
                question_id: &q.question_id,
                video_id: &q.video_id,
                text: &q.question,
            }),
            options: &options,
            reps: profile.reps,
            accounting: cfg.accounting,
        };
        let samples = profiler::ttft_series(&series, &profile.lengths);
        profiler::efficiency_report(&samples)?.write_to_dir(&dir)?;
    }

    Ok(RunOutcome { dir, results, records })
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub runs: Vec<(usize, RunOutcome)>,
    pub markdown: String,
    pub csv: String,
}

/// One run per `n_recent` value, then a combined table keyed by N.
pub fn sweep(cfg: &RunConfig, ns: &[usize]) -> Result<SweepOutcome> {
    if ns.is_empty() {
        return Err(Error::InvalidConfig("sweep list must not be empty".into()));
    }
    let mut runs = Vec::with_capacity(ns.len());
    for &n in ns {
        let mut c = cfg.clone();
        c.policy.n_recent = n;
        c.run_id = format!("{}-n{n}", cfg.run_id);
        c.sweep = None;
        runs.push((n, run(&c)?));
    }
    let results: Vec<ResultsFile> = runs.iter().map(|(_, o)| o.results.clone()).collect();
    let mut markdown = format!("## Window sweep: {}\n\n", cfg.run_id);
    markdown.push_str(&scoring::results_markdown(&results));
    let mut rows = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    rows.write_record(["n_recent", "run_id", "rt_avg", "bwd_avg", "overall_avg", "er", "delta_p", "delta_m"])
        .map_err(csv_err)?;
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    for (n, o) in &runs {
        let r = &o.results;
        rows.write_record([
            n.to_string(),
            r.run_id.clone(),
            opt(r.rt_avg),
            opt(r.bwd_avg),
            opt(r.overall_avg),
            opt(r.er),
            opt(r.delta_p),
            opt(r.delta_m),
        ])
        .map_err(csv_err)?;
    }
    let csv = String::from_utf8(rows.into_inner().map_err(|e| csv_err(e.into_error().into()))?)
        .expect("csv output is utf-8");
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join(format!("{}-sweep.md", cfg.run_id)), &markdown)?;
    fs::write(cfg.out_dir.join(format!("{}-sweep.csv", cfg.run_id)), &csv)?;
    Ok(SweepOutcome { runs, markdown, csv })
}

/// Loads results files and renders the comparison.
pub fn report(paths: &[PathBuf], reference: Option<&Path>) -> Result<scoring::ComparisonReport> {
    if paths.is_empty() {
        return Err(Error::InvalidInput("report needs at least one results file".into()));
    }
    let results = paths.iter().map(ResultsFile::load).collect::<Result<Vec<_>>>()?;
    let reference = reference.map(ResultsFile::load).transpose()?;
    scoring::comparison_report(&results, reference.as_ref())
}
