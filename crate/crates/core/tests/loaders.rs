use std::path::PathBuf;

use proptest::prelude::*;
use streamctx::bench::{load_benchmark, parse_benchmark, validate, BenchFormat, Category};
use streamctx::error::FindingKind;
use streamctx::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn native_fixture_loads_with_grounding_and_gold_forms() {
    let loaded = load_benchmark(fixture("native_small.json"), BenchFormat::Native).unwrap();
    let set = &loaded.set;
    assert_eq!(set.name, "native-small");
    let golds: Vec<usize> = set.questions.iter().map(|q| q.gold_option).collect();
    assert_eq!(golds, [0, 1, 2]);
    assert_eq!(set.question("n2").unwrap().query_time_s, 65.0);
    assert_eq!(set.grounding.as_ref().unwrap()["n2"].evidence, vec![[20.0, 22.0]]);
    assert_eq!(set.video_duration("v1"), Some(90.0));
    assert_eq!(set.video_duration("v2"), Some(30.0));
    assert!(validate(set).is_clean());
}

#[test]
fn native_round_trips_through_save() {
    let loaded = load_benchmark(fixture("native_small.json"), BenchFormat::Native).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.json");
    loaded.set.save(&path).unwrap();
    let again = load_benchmark(&path, BenchFormat::Native).unwrap();
    assert_eq!(again.set, loaded.set);
}

#[test]
fn ovo_fixture_skips_forward_tracks() {
    let loaded = load_benchmark(fixture("ovo_small.json"), BenchFormat::Ovo).unwrap();
    let ids: Vec<&str> = loaded.set.questions.iter().map(|q| q.question_id.as_str()).collect();
    assert_eq!(ids, ["1", "2", "3"]);
    assert_eq!(loaded.skipped.len(), 2);
    assert!(loaded.skipped.iter().all(|f| f.kind == FindingKind::OutOfScope));
    assert_eq!(loaded.set.question("1").unwrap().query_time_s, 42.0);
    assert_eq!(loaded.set.question("2").unwrap().gold_option, 0);
    assert_eq!(loaded.set.category_map["EPM"], Category::Backward);
    assert_eq!(loaded.source_items, 5);
    assert_eq!(loaded.source_tracks.len(), 5);
}

#[test]
fn published_size_check_catches_partial_files() {
    let loaded = load_benchmark(fixture("ovo_small.json"), BenchFormat::Ovo).unwrap();
    let Err(Error::Validation(findings)) = loaded.check_counts(1640, 12) else {
        panic!("a five-item file must fail the published-size check");
    };
    assert_eq!(findings.len(), 2);
    loaded.check_counts(5, 5).unwrap();
}

#[test]
fn streamingbench_fixture_maps_every_task_to_real_time() {
    let loaded = load_benchmark(fixture("streamingbench_small.json"), BenchFormat::StreamingBench).unwrap();
    let set = &loaded.set;
    assert_eq!(set.questions.len(), 3);
    assert_eq!(set.questions[0].question_id, "sb/sample_1.mp4#0");
    assert_eq!(set.questions[1].query_time_s, 60.0);
    assert_eq!(set.questions[1].gold_option, 2);
    assert!(set.category_map.values().all(|c| *c == Category::RealTime));
    assert_eq!(set.category_map.len(), 2);
}

#[test]
fn broken_file_reports_every_problem() {
    let Err(Error::Validation(findings)) = load_benchmark(fixture("broken_native.json"), BenchFormat::Native) else {
        panic!("broken fixture must not load");
    };
    let kinds: Vec<(Option<&str>, FindingKind)> =
        findings.iter().map(|f| (f.question_id.as_deref(), f.kind)).collect();
    for want in [
        (Some("b1"), FindingKind::DuplicateId),
        (Some("b2"), FindingKind::UnknownTrack),
        (Some("b3"), FindingKind::MissingGold),
        (Some("b4"), FindingKind::GoldOutOfRange),
        (Some("b5"), FindingKind::NegativeQueryTime),
        (Some("b6"), FindingKind::MalformedTime),
    ] {
        assert!(kinds.contains(&want), "missing {want:?} in {kinds:?}");
    }
    assert_eq!(findings.len(), 6, "{kinds:?}");
}

#[test]
fn duplicate_ids_found_once_the_rest_is_clean() {
    let text = std::fs::read_to_string(fixture("broken_native.json")).unwrap();
    let mut root: serde_json::Value = serde_json::from_str(&text).unwrap();
    root["questions"].as_array_mut().unwrap().truncate(2);
    let Err(Error::Validation(findings)) = parse_benchmark(&root.to_string(), BenchFormat::Native, "x") else {
        panic!("duplicate ids must be rejected");
    };
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0].kind, FindingKind::DuplicateId);
}

fn json_value() -> impl Strategy<Value = serde_json::Value> {
    let leaf = prop_oneof![
        Just(serde_json::Value::Null),
        any::<bool>().prop_map(Into::into),
        any::<i32>().prop_map(Into::into),
        (-1e6f64..1e6).prop_map(Into::into),
        "[A-Za-z0-9:()_ .-]{0,8}".prop_map(Into::into),
        prop_oneof![Just("OCR"), Just("EPM"), Just("REC"), Just("B"), Just("00:01:02")].prop_map(Into::into),
    ];
    leaf.prop_recursive(3, 32, 6, |inner| {
        let key = prop_oneof![
            Just("question_id"), Just("id"), Just("video_id"), Just("video"), Just("track"), Just("task"),
            Just("task_type"), Just("question"), Just("options"), Just("gold_option"), Just("gt"), Just("answer"),
            Just("query_time_s"), Just("realtime"), Just("time_stamp"), Just("questions"), Just("category_map"),
            Just("grounding"), Just("videos"), Just("name"),
        ]
        .prop_map(str::to_string);
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..5).prop_map(serde_json::Value::Array),
            prop::collection::btree_map(key, inner, 0..6)
                .prop_map(|m| serde_json::Value::Object(m.into_iter().collect())),
        ]
    })
}

proptest! {
    /// Any input yields a set or an error, never a panic; a loaded set is
    /// internally consistent.
    #[test]
    fn loaders_are_total(v in json_value(), raw in ".{0,40}") {
        for format in [BenchFormat::Native, BenchFormat::Ovo, BenchFormat::StreamingBench] {
            for text in [v.to_string(), raw.clone()] {
                if let Ok(loaded) = parse_benchmark(&text, format, "fuzz") {
                    for q in &loaded.set.questions {
                        prop_assert!(q.gold_option < q.options.len());
                        prop_assert!(q.query_time_s >= 0.0);
                        prop_assert!(loaded.set.category_map.contains_key(&q.track));
                    }
                    prop_assert!(loaded.set.questions.len() + loaded.skipped.len() <= loaded.source_items);
                }
            }
        }
    }
}
