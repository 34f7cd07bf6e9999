use std::collections::HashMap;

use proptest::prelude::*;
use streamctx::backends::{Backend, BackendRequest, GenerationParams, Grounding, GroundingMap, MockBackend, WireChunk, WireFrame};

fn frame(t: f64) -> WireFrame {
    WireFrame {
        t,
        mode: "ref".into(),
        data: format!("frame://v/{t}"),
    }
}

/// Evidence at [50, 52]; recent frames at 100.. and history chunks of 8
/// frames starting at 0, 8, 16, ... (all outside the evidence interval).
fn request(id: &str, recent: usize, history_chunks: usize, with_evidence: bool) -> BackendRequest {
    let mut retrieved: Vec<WireChunk> = (0..history_chunks)
        .map(|c| {
            let start = (c * 8) as f64;
            WireChunk {
                span: [start, start + 7.0],
                frames: (0..8).map(|i| frame(start + i as f64)).collect(),
            }
        })
        .filter(|c| c.span[1] < 50.0 || c.span[0] > 52.0)
        .collect();
    if with_evidence {
        retrieved.push(WireChunk {
            span: [50.0, 52.0],
            frames: vec![frame(50.0), frame(51.0), frame(52.0)],
        });
        retrieved.sort_by(|a, b| a.span[0].total_cmp(&b.span[0]));
    }
    BackendRequest {
        query_id: id.into(),
        question: "?".into(),
        options: vec!["a".into(), "b".into(), "c".into()],
        recent_frames: (0..recent).map(|i| frame(100.0 + i as f64)).collect(),
        retrieved_chunks: retrieved,
        generation: GenerationParams::default(),
        query_time_s: 200.0,
    }
}

fn mock(ids: &[String], beta: f64, seed: u64) -> MockBackend {
    let grounding: GroundingMap = ids
        .iter()
        .map(|id| (id.clone(), Grounding { evidence: vec![[50.0, 52.0]], beta }))
        .collect();
    let gold: HashMap<String, usize> = ids.iter().map(|id| (id.clone(), 1)).collect();
    MockBackend::new(grounding, gold, seed).unwrap()
}

proptest! {
    /// With the query id fixed, extra distracting history can turn a correct
    /// answer wrong but never a wrong one correct.
    #[test]
    fn more_history_never_helps(
        q in 0u32..10_000,
        seed in any::<u64>(),
        beta in 0.0f64..0.05,
        small in 0usize..6,
        extra in 0usize..6,
    ) {
        let id = format!("q{q}");
        let backend = mock(std::slice::from_ref(&id), beta, seed);
        let a = backend.answer(&request(&id, 4, small, true)).unwrap();
        let b = backend.answer(&request(&id, 4, small + extra, true)).unwrap();
        let correct = |r: &streamctx::backends::BackendResponse| r.chosen_option == Some(1);
        prop_assert!(!correct(&b) || correct(&a));
    }

    /// Same inputs, same answer; without evidence the answer is always the
    /// fixed wrong option.
    #[test]
    fn answers_are_pure_functions_of_the_request(q in 0u32..1000, seed in any::<u64>(), chunks in 0usize..8) {
        let id = format!("q{q}");
        let backend = mock(std::slice::from_ref(&id), 0.01, seed);
        let req = request(&id, 4, chunks, true);
        prop_assert_eq!(backend.answer(&req).unwrap(), backend.answer(&req).unwrap());
        let blind = backend.answer(&request(&id, 4, chunks, false)).unwrap();
        prop_assert_eq!(blind.chosen_option, Some(2));
    }
}

#[test]
fn error_rate_follows_history_length() {
    let ids: Vec<String> = (0..20_000).map(|i| format!("q{i}")).collect();
    let backend = mock(&ids, 0.005, 3);
    for chunks in [0usize, 5, 10] {
        let history = request("q0", 4, chunks, true).retrieved_frame_count();
        let hits = ids
            .iter()
            .filter(|id| backend.answer(&request(id, 4, chunks, true)).unwrap().chosen_option == Some(1))
            .count();
        let p = 1.0 - 0.005 * history as f64;
        let rate = hits as f64 / ids.len() as f64;
        assert!((rate - p).abs() < 0.015, "{history} history frames: {rate} vs {p}");
    }
}
