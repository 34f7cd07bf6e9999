//! Accuracy, category averages and perception/memory deltas.
//!
//! Category averages are unweighted means over tracks, and the overall score
//! is the mean of the real-time and backward averages. Episodic recall is the
//! mean of the backward tracks other than hallucination detection (EPM and
//! ASI on OVO-Bench). Everything is kept at full precision; rounded copies are
//! serialized alongside for display.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::BackendResponse;
use crate::bench::{BenchmarkSet, Category, CategoryMap, HALLUCINATION_TRACK, OVO_BACKWARD, OVO_REAL_TIME};
use crate::error::{Error, Result};

/// Per-track accuracy in percent, with the number of questions behind each.
/// Scores entered from published tables carry no counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackScores {
    pub accuracy: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, usize>,
}

impl TrackScores {
    pub fn from_accuracies<'a>(items: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        Self {
            accuracy: items.into_iter().map(|(t, a)| (t.to_string(), a)).collect(),
            counts: BTreeMap::new(),
        }
    }

    pub fn get(&self, track: &str) -> Option<f64> {
        self.accuracy.get(track).copied()
    }

    fn require(&self, track: &str) -> Result<f64> {
        self.get(track)
            .ok_or_else(|| Error::Scoring(format!("track {track} is missing")))
    }
}

/// How unanswered questions are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Any question without a response is an error.
    Strict,
    /// Unanswered questions count as wrong.
    #[default]
    CountWrong,
}

/// Exact-match accuracy of `(question_id, chosen_option)` pairs.
pub fn score_choices<'a>(
    choices: impl IntoIterator<Item = (&'a str, Option<usize>)>,
    benchmark: &BenchmarkSet,
    missing: MissingPolicy,
) -> Result<TrackScores> {
    let by_id: HashMap<&str, _> = benchmark
        .questions
        .iter()
        .map(|q| (q.question_id.as_str(), q))
        .collect();
    let mut chosen: HashMap<&str, Option<usize>> = HashMap::new();
    for (id, c) in choices {
        let Some((&key, _)) = by_id.get_key_value(id) else {
            return Err(Error::Scoring(format!("response for unknown question `{id}`")));
        };
        if chosen.insert(key, c).is_some() {
            return Err(Error::Scoring(format!("two responses for question `{id}`")));
        }
    }
    if missing == MissingPolicy::Strict && chosen.len() < benchmark.questions.len() {
        let absent: Vec<&str> = benchmark
            .questions
            .iter()
            .map(|q| q.question_id.as_str())
            .filter(|id| !chosen.contains_key(id))
            .collect();
        return Err(Error::Scoring(format!(
            "{} unanswered questions: {}",
            absent.len(),
            absent.join(", ")
        )));
    }
    let mut correct: BTreeMap<String, usize> = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for q in &benchmark.questions {
        *counts.entry(q.track.clone()).or_default() += 1;
        let hit = chosen.get(q.question_id.as_str()).copied().flatten() == Some(q.gold_option);
        *correct.entry(q.track.clone()).or_default() += usize::from(hit);
    }
    let accuracy = counts
        .iter()
        .map(|(t, &n)| (t.clone(), 100.0 * correct[t] as f64 / n as f64))
        .collect();
    Ok(TrackScores { accuracy, counts })
}

pub fn track_accuracy(
    responses: &[BackendResponse],
    benchmark: &BenchmarkSet,
    missing: MissingPolicy,
) -> Result<TrackScores> {
    score_choices(
        responses.iter().map(|r| (r.query_id.as_str(), r.chosen_option)),
        benchmark,
        missing,
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub rt_avg: Option<f64>,
    pub bwd_avg: Option<f64>,
    pub overall_avg: Option<f64>,
    /// Episodic recall: mean of the memory tracks.
    pub er: Option<f64>,
    pub bwd_avg_excl_hld: Option<f64>,
}

/// Backward tracks other than hallucination detection.
pub fn memory_tracks(map: &CategoryMap) -> Vec<String> {
    map.iter()
        .filter(|(t, c)| **c == Category::Backward && t.as_str() != HALLUCINATION_TRACK)
        .map(|(t, _)| t.clone())
        .collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Category means over the tracks of `map`. In strict mode every mapped
/// real-time and backward track must be scored; otherwise absent tracks are
/// left out of the means.
pub fn category_averages(scores: &TrackScores, map: &CategoryMap, strict: bool) -> Result<CategoryReport> {
    let mut rt = Vec::new();
    let mut bwd = Vec::new();
    let mut mem = Vec::new();
    let mut absent = Vec::new();
    for (track, cat) in map {
        if *cat == Category::Other {
            continue;
        }
        let Some(a) = scores.get(track) else {
            absent.push(track.as_str());
            continue;
        };
        if !(0.0..=100.0).contains(&a) {
            return Err(Error::Scoring(format!("track {track} accuracy {a} outside [0, 100]")));
        }
        match cat {
            Category::RealTime => rt.push(a),
            Category::Backward => {
                bwd.push(a);
                if track != HALLUCINATION_TRACK {
                    mem.push(a);
                }
            }
            Category::Other => {}
        }
    }
    if strict && !absent.is_empty() {
        return Err(Error::Scoring(format!("missing tracks: {}", absent.join(", "))));
    }
    let rt_avg = mean(&rt);
    let bwd_avg = mean(&bwd);
    let er = mean(&mem);
    Ok(CategoryReport {
        rt_avg,
        bwd_avg,
        overall_avg: rt_avg.zip(bwd_avg).map(|(r, b)| (r + b) / 2.0),
        er,
        bwd_avg_excl_hld: er,
    })
}

/// Mean of EPM and ASI.
pub fn episodic_recall(scores: &TrackScores) -> Result<f64> {
    Ok((scores.require("EPM")? + scores.require("ASI")?) / 2.0)
}

/// Change in the real-time average, method minus reference.
pub fn delta_p(method: &CategoryReport, reference: &CategoryReport) -> Result<f64> {
    match (method.rt_avg, reference.rt_avg) {
        (Some(m), Some(r)) => Ok(m - r),
        _ => Err(Error::Scoring("delta_p needs a real-time average on both sides".into())),
    }
}

/// Change in episodic recall (EPM, ASI), method minus reference.
pub fn delta_m(method: &TrackScores, reference: &TrackScores) -> Result<f64> {
    Ok(episodic_recall(method)? - episodic_recall(reference)?)
}

/// [`delta_m`] over an arbitrary set of memory tracks.
pub fn delta_m_with(method: &TrackScores, reference: &TrackScores, tracks: &[String]) -> Result<f64> {
    if tracks.is_empty() {
        return Err(Error::Scoring("delta_m needs at least one memory track".into()));
    }
    let er = |s: &TrackScores| -> Result<f64> {
        Ok(tracks.iter().map(|t| s.require(t)).sum::<Result<f64>>()? / tracks.len() as f64)
    };
    Ok(er(method)? - er(reference)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffReport {
    pub delta_p: f64,
    pub delta_m: f64,
    pub reference_id: String,
}

pub fn tradeoff(
    method: &TrackScores,
    reference: &TrackScores,
    map: &CategoryMap,
    reference_id: &str,
) -> Result<TradeoffReport> {
    let m = category_averages(method, map, false)?;
    let r = category_averages(reference, map, false)?;
    let report = TradeoffReport {
        delta_p: delta_p(&m, &r)?,
        delta_m: delta_m_with(method, reference, &memory_tracks(map))?,
        reference_id: reference_id.to_string(),
    };
    if !report.delta_p.is_finite() || !report.delta_m.is_finite() {
        return Err(Error::Scoring("non-finite delta".into()));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub track: String,
    pub base: f64,
    pub variant: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub base: CategoryReport,
    pub variant: CategoryReport,
    /// Variant minus base overall average.
    pub overall_delta: Option<f64>,
    /// Mean per-track gain over the memory tracks.
    pub memory_gain: Option<f64>,
    /// Base minus variant real-time average.
    pub rt_drop: Option<f64>,
}

/// Canonical display order: real-time, backward, other; OVO tracks in their
/// usual order, anything else alphabetically.
pub fn track_order(tracks: impl IntoIterator<Item = String>, map: &CategoryMap) -> Vec<String> {
    let canonical = |t: &str| {
        OVO_REAL_TIME
            .iter()
            .chain(&OVO_BACKWARD)
            .position(|c| *c == t)
            .unwrap_or(usize::MAX)
    };
    let mut v: Vec<String> = tracks.into_iter().collect();
    v.sort_by(|a, b| {
        let key = |t: &String| (map.get(t).copied().unwrap_or(Category::Other), canonical(t));
        key(a).cmp(&key(b)).then_with(|| a.cmp(b))
    });
    v.dedup();
    v
}

pub fn ablation_delta_table(base: &TrackScores, variant: &TrackScores, map: &CategoryMap) -> Result<AblationTable> {
    let base_tracks: HashSet<&String> = base.accuracy.keys().collect();
    let variant_tracks: HashSet<&String> = variant.accuracy.keys().collect();
    if base_tracks != variant_tracks {
        return Err(Error::Scoring("ablation needs matching track sets".into()));
    }
    let rows = track_order(base.accuracy.keys().cloned(), map)
        .into_iter()
        .map(|t| {
            let (b, v) = (base.accuracy[&t], variant.accuracy[&t]);
            AblationRow {
                track: t,
                base: b,
                variant: v,
                delta: v - b,
            }
        })
        .collect::<Vec<_>>();
    let b = category_averages(base, map, false)?;
    let v = category_averages(variant, map, false)?;
    let mem = memory_tracks(map);
    let gains: Vec<f64> = rows.iter().filter(|r| mem.contains(&r.track)).map(|r| r.delta).collect();
    Ok(AblationTable {
        overall_delta: v.overall_avg.zip(b.overall_avg).map(|(v, b)| v - b),
        memory_gain: mean(&gains),
        rt_drop: b.rt_avg.zip(v.rt_avg).map(|(b, v)| b - v),
        rows,
        base: b,
        variant: v,
    })
}

fn round_to(x: f64, dp: i32) -> f64 {
    let f = 10f64.powi(dp);
    (x * f).round() / f
}

/// Rounded copies of the headline numbers, as printed in tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DisplayValues {
    pub per_track: BTreeMap<String, f64>,
    pub rt_avg: Option<f64>,
    pub bwd_avg: Option<f64>,
    pub overall_avg: Option<f64>,
    pub er: Option<f64>,
    pub bwd_avg_excl_hld: Option<f64>,
    pub delta_p: Option<f64>,
    pub delta_m: Option<f64>,
}

/// The per-run results file. Holds no timings, so mock-backed runs are
/// byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub run_id: String,
    pub policy: String,
    pub backend: String,
    #[serde(default)]
    pub benchmark: String,
    pub category_map: CategoryMap,
    pub per_track: BTreeMap<String, f64>,
    #[serde(default)]
    pub counts: BTreeMap<String, usize>,
    pub rt_avg: Option<f64>,
    pub bwd_avg: Option<f64>,
    pub overall_avg: Option<f64>,
    pub er: Option<f64>,
    pub bwd_avg_excl_hld: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_id: Option<String>,
    #[serde(default)]
    pub n_questions: usize,
    #[serde(default)]
    pub n_failed: usize,
    #[serde(default)]
    pub display: DisplayValues,
}

impl ResultsFile {
    pub fn new(
        run_id: &str,
        policy: &str,
        backend: &str,
        benchmark: &str,
        scores: &TrackScores,
        map: &CategoryMap,
        strict: bool,
    ) -> Result<Self> {
        let cats = category_averages(scores, map, strict)?;
        let mut r = Self {
            run_id: run_id.into(),
            policy: policy.into(),
            backend: backend.into(),
            benchmark: benchmark.into(),
            category_map: map.clone(),
            per_track: scores.accuracy.clone(),
            counts: scores.counts.clone(),
            rt_avg: cats.rt_avg,
            bwd_avg: cats.bwd_avg,
            overall_avg: cats.overall_avg,
            er: cats.er,
            bwd_avg_excl_hld: cats.bwd_avg_excl_hld,
            delta_p: None,
            delta_m: None,
            reference_id: None,
            n_questions: scores.counts.values().sum(),
            n_failed: 0,
            display: DisplayValues::default(),
        };
        r.refresh_display();
        Ok(r)
    }

    pub fn scores(&self) -> TrackScores {
        TrackScores {
            accuracy: self.per_track.clone(),
            counts: self.counts.clone(),
        }
    }

    /// Fills ΔP and ΔM against `reference`.
    pub fn apply_reference(&mut self, reference: &ResultsFile) -> Result<()> {
        let t = tradeoff(&self.scores(), &reference.scores(), &self.category_map, &reference.run_id)?;
        self.delta_p = Some(t.delta_p);
        self.delta_m = Some(t.delta_m);
        self.reference_id = Some(t.reference_id);
        self.refresh_display();
        Ok(())
    }

    fn refresh_display(&mut self) {
        let r1 = |x: Option<f64>| x.map(|v| round_to(v, 1));
        self.display = DisplayValues {
            per_track: self.per_track.iter().map(|(t, a)| (t.clone(), round_to(*a, 1))).collect(),
            rt_avg: r1(self.rt_avg),
            bwd_avg: r1(self.bwd_avg),
            overall_avg: self.overall_avg.map(|v| round_to(v, 2)),
            er: r1(self.er),
            bwd_avg_excl_hld: r1(self.bwd_avg_excl_hld),
            delta_p: r1(self.delta_p),
            delta_m: r1(self.delta_m),
        };
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

fn cell(x: Option<f64>, dp: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.dp$}"))
}

fn csv_string(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| err(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn all_tracks(results: &[ResultsFile]) -> Vec<String> {
    let mut map = CategoryMap::new();
    for r in results {
        map.extend(r.category_map.iter().map(|(k, v)| (k.clone(), *v)));
    }
    track_order(results.iter().flat_map(|r| r.per_track.keys().cloned()), &map)
}

/// One row per run: per-track accuracy, category averages and deltas.
pub fn results_csv(results: &[ResultsFile]) -> Result<String> {
    let tracks = all_tracks(results);
    let mut header: Vec<String> = ["run_id", "policy", "backend"].map(String::from).to_vec();
    header.extend(tracks.iter().cloned());
    header.extend(
        ["rt_avg", "bwd_avg", "overall_avg", "er", "bwd_avg_excl_hld", "delta_p", "delta_m", "reference_id"]
            .map(String::from),
    );
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let mut row = vec![r.run_id.clone(), r.policy.clone(), r.backend.clone()];
            let full = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
            row.extend(tracks.iter().map(|t| full(r.per_track.get(t).copied())));
            row.extend([r.rt_avg, r.bwd_avg, r.overall_avg, r.er, r.bwd_avg_excl_hld, r.delta_p, r.delta_m].map(full));
            row.push(r.reference_id.clone().unwrap_or_default());
            row
        })
        .collect();
    csv_string(&header, &rows)
}

/// Per-track accuracy table with category columns, one row per run.
pub fn results_markdown(results: &[ResultsFile]) -> String {
    let tracks = all_tracks(results);
    let mut md = String::from("| run | policy |");
    for t in &tracks {
        let _ = write!(md, " {t} |");
    }
    md.push_str(" RT | Bwd | Avg | ER | Bwd excl. HLD |\n|---|---|");
    for _ in 0..tracks.len() + 5 {
        md.push_str("---:|");
    }
    md.push('\n');
    for r in results {
        let _ = write!(md, "| {} | {} |", r.run_id, r.policy);
        for t in &tracks {
            let _ = write!(md, " {} |", cell(r.per_track.get(t).copied(), 1));
        }
        let _ = writeln!(
            md,
            " {} | {} | {} | {} | {} |",
            cell(r.rt_avg, 1),
            cell(r.bwd_avg, 1),
            cell(r.overall_avg, 2),
            cell(r.er, 1),
            cell(r.bwd_avg_excl_hld, 1)
        );
    }
    md
}

pub fn ablation_markdown(table: &AblationTable, base_label: &str, variant_label: &str) -> String {
    let mut md = format!("| track | {base_label} | {variant_label} | delta |\n|---|---:|---:|---:|\n");
    for r in &table.rows {
        let _ = writeln!(md, "| {} | {:.1} | {:.1} | {:+.1} |", r.track, r.base, r.variant, r.delta);
    }
    let _ = writeln!(
        md,
        "| Avg | {} | {} | {} |",
        cell(table.base.overall_avg, 1),
        cell(table.variant.overall_avg, 1),
        table.overall_delta.map_or_else(|| "-".into(), |d| format!("{d:+.1}"))
    );
    if let Some(g) = table.memory_gain {
        let _ = writeln!(md, "\nMemory-track mean gain: {g:+.2}");
    }
    if let Some(d) = table.rt_drop {
        let _ = writeln!(md, "Real-time mean drop: {d:.2}");
    }
    md
}

/// Everything `report` renders for a set of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub markdown: String,
    pub csv: String,
    /// `run_id,delta_p,delta_m` pairs; empty without a reference.
    pub deltas_csv: String,
    pub ablation: Option<AblationTable>,
}

/// Renders runs side by side. With a reference, deltas are recomputed against
/// it; with exactly two runs, a per-track ablation table is added.
pub fn comparison_report(results: &[ResultsFile], reference: Option<&ResultsFile>) -> Result<ComparisonReport> {
    if results.is_empty() {
        return Err(Error::InvalidInput("report needs at least one results file".into()));
    }
    let mut runs = results.to_vec();
    if let Some(r) = reference {
        for run in &mut runs {
            run.apply_reference(r)?;
        }
    }
    let mut markdown = results_markdown(&runs);
    let with_deltas: Vec<&ResultsFile> = runs.iter().filter(|r| r.delta_p.is_some()).collect();
    let deltas_csv = if with_deltas.is_empty() {
        String::new()
    } else {
        let _ = writeln!(markdown, "\n| run | delta_p | delta_m | reference |\n|---|---:|---:|---|");
        let rows: Vec<Vec<String>> = with_deltas
            .iter()
            .map(|r| {
                let _ = writeln!(
                    markdown,
                    "| {} | {} | {} | {} |",
                    r.run_id,
                    r.delta_p.map_or_else(|| "-".into(), |d| format!("{d:+.1}")),
                    r.delta_m.map_or_else(|| "-".into(), |d| format!("{d:+.1}")),
                    r.reference_id.as_deref().unwrap_or("")
                );
                vec![
                    r.run_id.clone(),
                    r.delta_p.map_or_else(String::new, |v| v.to_string()),
                    r.delta_m.map_or_else(String::new, |v| v.to_string()),
                ]
            })
            .collect();
        csv_string(&["run_id", "delta_p", "delta_m"].map(String::from), &rows)?
    };
    let ablation = if runs.len() == 2 {
        let t = ablation_delta_table(&runs[0].scores(), &runs[1].scores(), &runs[0].category_map)?;
        let _ = writeln!(markdown, "\n{}", ablation_markdown(&t, &runs[0].run_id, &runs[1].run_id));
        Some(t)
    } else {
        None
    };
    Ok(ComparisonReport {
        csv: results_csv(&runs)?,
        markdown,
        deltas_csv,
        ablation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{ovo_category_map, QuestionRecord};
    use proptest::prelude::*;

    const TRACKS: [&str; 9] = ["OCR", "ACR", "ATR", "STU", "FPD", "OJR", "EPM", "ASI", "HLD"];

    fn row(v: [f64; 9]) -> TrackScores {
        TrackScores::from_accuracies(TRACKS.iter().copied().zip(v))
    }

    fn bench(tracks: &[(&str, usize)]) -> BenchmarkSet {
        let mut questions = Vec::new();
        for (t, n) in tracks {
            for i in 0..*n {
                questions.push(QuestionRecord {
                    question_id: format!("{t}-{i}"),
                    video_id: "v".into(),
                    track: t.to_string(),
                    question: "?".into(),
                    options: vec!["a".into(), "b".into()],
                    gold_option: 1,
                    query_time_s: 1.0,
                });
            }
        }
        BenchmarkSet {
            name: "t".into(),
            category_map: ovo_category_map(),
            questions,
            grounding: None,
            videos: BTreeMap::new(),
        }
    }

    #[test]
    fn accuracy_counts_exact_matches() {
        let b = bench(&[("OCR", 4)]);
        let s = score_choices(
            [("OCR-0", Some(1)), ("OCR-1", Some(1)), ("OCR-2", Some(1)), ("OCR-3", Some(0))],
            &b,
            MissingPolicy::Strict,
        )
        .unwrap();
        assert_eq!(s.get("OCR"), Some(75.0));
        assert_eq!(s.counts["OCR"], 4);
    }

    #[test]
    fn all_correct_is_full_marks() {
        let b = bench(&[("OCR", 3), ("EPM", 2)]);
        let s = score_choices(b.questions.iter().map(|q| (q.question_id.as_str(), Some(1))), &b, MissingPolicy::Strict)
            .unwrap();
        assert!(s.accuracy.values().all(|a| *a == 100.0));
    }

    #[test]
    fn unknown_and_missing_responses() {
        let b = bench(&[("OCR", 2)]);
        assert!(matches!(
            score_choices([("nope", Some(1))], &b, MissingPolicy::CountWrong),
            Err(Error::Scoring(_))
        ));
        assert!(score_choices([("OCR-0", Some(1))], &b, MissingPolicy::Strict).is_err());
        let s = score_choices([("OCR-0", Some(1))], &b, MissingPolicy::CountWrong).unwrap();
        assert_eq!(s.get("OCR"), Some(50.0));
        assert!(score_choices([("OCR-0", Some(1)), ("OCR-0", Some(1))], &b, MissingPolicy::CountWrong).is_err());
    }

    #[test]
    fn constant_tracks() {
        let c = category_averages(&row([50.0; 9]), &ovo_category_map(), true).unwrap();
        assert_eq!((c.rt_avg, c.bwd_avg, c.overall_avg), (Some(50.0), Some(50.0), Some(50.0)));
    }

    #[test]
    fn strict_mode_requires_every_track() {
        let mut s = row([50.0; 9]);
        s.accuracy.remove("HLD");
        assert!(category_averages(&s, &ovo_category_map(), true).is_err());
        let c = category_averages(&s, &ovo_category_map(), false).unwrap();
        assert_eq!(c.bwd_avg, Some(50.0));
    }

    #[test]
    fn table_rows_close() {
        let map = ovo_category_map();
        let q3 = category_averages(&row([94.0, 85.3, 82.8, 65.7, 77.2, 83.2, 51.9, 58.1, 52.1]), &map, true).unwrap();
        assert!((q3.rt_avg.unwrap() - 81.4).abs() <= 0.05);
        assert!((q3.bwd_avg.unwrap() - 54.0).abs() <= 0.05);
        assert!((q3.overall_avg.unwrap() - 67.70).abs() <= 0.05);
        let q25 = category_averages(&row([88.6, 67.0, 81.0, 64.6, 69.3, 79.3, 49.2, 56.8, 42.5]), &map, true).unwrap();
        assert!((q25.rt_avg.unwrap() - 75.0).abs() <= 0.05);
        assert!((q25.bwd_avg.unwrap() - 49.5).abs() <= 0.05);
        assert!((q25.overall_avg.unwrap() - 62.22).abs() <= 0.05);
        assert!((q25.er.unwrap() - 53.0).abs() < 1e-9);
        assert_eq!(q25.er, q25.bwd_avg_excl_hld);
    }

    #[test]
    fn self_difference_is_zero() {
        let s = row([60.0, 61.0, 62.0, 63.0, 64.0, 65.0, 40.0, 41.0, 42.0]);
        let c = category_averages(&s, &ovo_category_map(), true).unwrap();
        assert_eq!(delta_p(&c, &c).unwrap(), 0.0);
        assert_eq!(delta_m(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn ablation_rows() {
        let map = ovo_category_map();
        let base = row([94.0, 78.9, 81.9, 64.0, 77.2, 81.5, 52.5, 58.8, 45.7]);
        let rag = row([85.9, 71.6, 81.9, 62.4, 74.3, 72.3, 59.6, 64.9, 33.3]);
        let t = ablation_delta_table(&base, &rag, &map).unwrap();
        let d = |track: &str| t.rows.iter().find(|r| r.track == track).unwrap().delta;
        assert!((d("EPM") - 7.1).abs() < 1e-9);
        assert!((d("HLD") + 12.4).abs() < 1e-9);
        assert_eq!(t.rows[0].track, "OCR");
        assert_eq!(t.rows[8].track, "HLD");
        assert!((t.overall_delta.unwrap() + 2.3).abs() <= 0.1);
        assert!(ablation_delta_table(&base, &row([1.0; 9]), &map).is_ok());
        let mut short = rag.clone();
        short.accuracy.remove("OCR");
        assert!(ablation_delta_table(&base, &short, &map).is_err());
    }

    #[test]
    fn results_file_round_trip_and_render() {
        let map = ovo_category_map();
        let s = row([88.6, 67.0, 81.0, 64.6, 69.3, 79.3, 49.2, 56.8, 42.5]);
        let mut r = ResultsFile::new("ref", "recency", "fixture", "ovo", &s, &map, true).unwrap();
        assert_eq!(r.display.overall_avg, Some(62.23));
        let reference = r.clone();
        r.apply_reference(&reference).unwrap();
        assert_eq!(r.delta_p, Some(0.0));
        let back: ResultsFile = serde_json::from_slice(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let csv = results_csv(&[r.clone()]).unwrap();
        assert!(csv.starts_with("run_id,policy,backend,OCR,ACR,ATR,STU,FPD,OJR,EPM,ASI,HLD,rt_avg,"));
        let md = results_markdown(&[r]);
        assert!(md.contains("| ref | recency | 88.6 | 67.0 |"));
    }

    #[test]
    fn report_needs_input() {
        assert!(comparison_report(&[], None).is_err());
    }

    fn arb_row() -> impl Strategy<Value = [f64; 9]> {
        proptest::array::uniform9(0.0f64..90.0)
    }

    proptest! {
        #[test]
        fn deltas_are_antisymmetric(a in arb_row(), b in arb_row()) {
            let map = ovo_category_map();
            let (sa, sb) = (row(a), row(b));
            let (ca, cb) = (category_averages(&sa, &map, true).unwrap(), category_averages(&sb, &map, true).unwrap());
            prop_assert!((delta_p(&ca, &cb).unwrap() + delta_p(&cb, &ca).unwrap()).abs() < 1e-9);
            prop_assert!((delta_m(&sa, &sb).unwrap() + delta_m(&sb, &sa).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn deltas_ignore_common_shift(a in arb_row(), b in arb_row(), c in 0.0f64..10.0) {
            let map = ovo_category_map();
            let shift = |v: [f64; 9]| v.map(|x| x + c);
            let (sa, sb) = (row(a), row(b));
            let (ta, tb) = (row(shift(a)), row(shift(b)));
            let dp = |x: &TrackScores, y: &TrackScores| {
                delta_p(&category_averages(x, &map, true).unwrap(), &category_averages(y, &map, true).unwrap()).unwrap()
            };
            prop_assert!((dp(&sa, &sb) - dp(&ta, &tb)).abs() < 1e-9);
            prop_assert!((delta_m(&sa, &sb).unwrap() - delta_m(&ta, &tb).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn one_rt_point_moves_overall_by_a_twelfth(a in arb_row(), i in 0usize..6) {
            let map = ovo_category_map();
            let mut b = a;
            b[i] += 1.0;
            let oa = category_averages(&row(a), &map, true).unwrap().overall_avg.unwrap();
            let ob = category_averages(&row(b), &map, true).unwrap().overall_avg.unwrap();
            prop_assert!((ob - oa - 1.0 / 12.0).abs() < 1e-9);
        }

        #[test]
        fn overall_is_mean_of_categories(a in arb_row()) {
            let c = category_averages(&row(a), &ovo_category_map(), true).unwrap();
            prop_assert!((c.overall_avg.unwrap() - (c.rt_avg.unwrap() + c.bwd_avg.unwrap()) / 2.0).abs() < 1e-9);
        }
    }
}
