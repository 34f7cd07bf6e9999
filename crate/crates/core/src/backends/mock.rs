use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendRequest, BackendResponse};
use crate::bench::BenchmarkSet;
use crate::error::{Error, Result};
use crate::rng::keyed_rng;

/// Evidence intervals and distraction coefficient for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub evidence: Vec<[f64; 2]>,
    #[serde(default)]
    pub beta: f64,
}

impl Grounding {
    pub fn validate(&self, question_id: &str) -> Result<()> {
        if let Some(iv) = self.evidence.iter().find(|iv| !(iv[0] <= iv[1])) {
            return Err(Error::InvalidInput(format!(
                "question {question_id}: evidence interval [{}, {}] is not ordered",
                iv[0], iv[1]
            )));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidInput(format!(
                "question {question_id}: beta must be finite and non-negative"
            )));
        }
        Ok(())
    }

    pub fn covers(&self, t: f64) -> bool {
        self.evidence.iter().any(|iv| iv[0] <= t && t <= iv[1])
    }
}

pub type GroundingMap = BTreeMap<String, Grounding>;

/// Artificial latency injected before the mock replies.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MockDelay {
    #[default]
    None,
    Fixed(Duration),
    /// Scales with the number of context frames in the request.
    PerFrame(Duration),
}

impl MockDelay {
    fn for_request(&self, request: &BackendRequest) -> Duration {
        match *self {
            MockDelay::None => Duration::ZERO,
            MockDelay::Fixed(d) => d,
            MockDelay::PerFrame(d) => d * request.context_frame_count() as u32,
        }
    }
}

/// Sleeps most of `d`, then spins, so sub-millisecond delays stay accurate.
fn precise_wait(d: Duration) {
    let deadline = Instant::now() + d;
    if let Some(coarse) = d.checked_sub(Duration::from_micros(500)) {
        std::thread::sleep(coarse);
    }
    while Instant::now() < deadline {
        std::hint::spin_loop();
    }
}

/// Ground-truth oracle with a distraction term.
///
/// The base answer is correct iff some context frame lies in an evidence
/// interval. It is then flipped to wrong with probability
/// `min(1, beta * n_hist)`, where `n_hist` counts context frames outside the
/// recent window, using a draw keyed by `(seed, query_id)`. Wrong answers are
/// always `(gold + 1) mod |options|`.
#[derive(Debug, Clone)]
pub struct MockBackend {
    id: String,
    grounding: GroundingMap,
    gold: HashMap<String, usize>,
    seed: u64,
    recent_window: Option<usize>,
    beta_override: Option<f64>,
    delay: MockDelay,
}

impl MockBackend {
    pub fn new(grounding: GroundingMap, gold: HashMap<String, usize>, seed: u64) -> Result<Self> {
        for (qid, g) in &grounding {
            g.validate(qid)?;
        }
        Ok(Self {
            id: "mock".into(),
            grounding,
            gold,
            seed,
            recent_window: None,
            beta_override: None,
            delay: MockDelay::None,
        })
    }

    pub fn from_benchmark(set: &BenchmarkSet, seed: u64) -> Result<Self> {
        let grounding = set.grounding.clone().ok_or_else(|| {
            Error::InvalidConfig(format!(
                "benchmark `{}` has no grounding map; the mock backend needs one",
                set.name
            ))
        })?;
        let gold = set
            .questions
            .iter()
            .map(|q| (q.question_id.clone(), q.gold_option))
            .collect();
        Self::new(grounding, gold, seed)
    }

    /// Recent frames beyond the last `n` also count as history.
    pub fn with_recent_window(mut self, n: usize) -> Self {
        self.recent_window = Some(n);
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidConfig("beta must be finite and non-negative".into()));
        }
        self.beta_override = Some(beta);
        Ok(self)
    }

    pub fn with_delay(mut self, delay: MockDelay) -> Self {
        self.delay = delay;
        self
    }

    pub fn history_frames(&self, request: &BackendRequest) -> usize {
        let beyond_window = self
            .recent_window
            .map_or(0, |n| request.recent_frames.len().saturating_sub(n));
        request.retrieved_frame_count() + beyond_window
    }

    /// Applies the oracle without any injected delay.
    pub fn mock_answer(&self, request: &BackendRequest) -> Result<BackendResponse> {
        let grounding = self
            .grounding
            .get(&request.query_id)
            .ok_or_else(|| Error::GroundingMissing(request.query_id.clone()))?;
        let gold = *self
            .gold
            .get(&request.query_id)
            .ok_or_else(|| Error::GroundingMissing(request.query_id.clone()))?;
        let n_options = request.options.len();
        if gold >= n_options {
            return Err(Error::InvalidInput(format!(
                "question {} has gold option {gold} but {n_options} options",
                request.query_id
            )));
        }

        let base_correct = request.frame_times().any(|t| grounding.covers(t));
        let beta = self.beta_override.unwrap_or(grounding.beta);
        let p_err = (beta * self.history_frames(request) as f64).min(1.0);
        let draw: f64 = keyed_rng(self.seed, &[b"mock", request.query_id.as_bytes()]).random();
        let correct = base_correct && draw >= p_err;

        let chosen = if correct { gold } else { (gold + 1) % n_options };
        Ok(BackendResponse {
            query_id: request.query_id.clone(),
            answer_text: request.options[chosen].clone(),
            chosen_option: Some(chosen),
            ttft_ms: None,
            token_count: Some(1),
            client_ttft_ms: None,
        })
    }
}

impl Backend for MockBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn answer(&self, request: &BackendRequest) -> Result<BackendResponse> {
        precise_wait(self.delay.for_request(request));
        self.mock_answer(request)
    }
}
