//! Published per-track accuracies used as scorer inputs.
//!
//! Track order is OCR, ACR, ATR, STU, FPD, OJR, EPM, ASI, HLD. `printed` holds
//! the real-time, backward and overall averages exactly as published.

use streamctx::scoring::TrackScores;

pub const TRACKS: [&str; 9] = ["OCR", "ACR", "ATR", "STU", "FPD", "OJR", "EPM", "ASI", "HLD"];

pub struct Row {
    pub name: &'static str,
    pub tracks: [f64; 9],
    pub printed: [f64; 3],
}

impl Row {
    pub fn scores(&self) -> TrackScores {
        scores(&self.tracks)
    }
}

pub fn scores(values: &[f64; 9]) -> TrackScores {
    TrackScores::from_accuracies(TRACKS.iter().copied().zip(values.iter().copied()))
}

const fn row(name: &'static str, tracks: [f64; 9], printed: [f64; 3]) -> Row {
    Row { name, tracks, printed }
}

pub const ROWS: [Row; 20] = [
    row("Human", [94.0, 92.6, 94.8, 92.7, 91.1, 94.0, 92.6, 93.0, 91.4], [93.2, 92.3, 92.77]),
    row("Qwen2.5-VL-7B", [67.8, 55.1, 67.2, 42.1, 66.3, 60.9, 51.5, 58.8, 23.7], [59.9, 44.7, 52.28]),
    row("LLaVA-OneVision-7B", [66.4, 57.8, 73.3, 53.4, 71.3, 62.0, 54.2, 55.4, 21.5], [64.0, 43.7, 53.85]),
    row("InternVL2-8B", [67.1, 60.6, 63.8, 46.1, 68.3, 56.5, 48.2, 57.4, 24.7], [60.4, 43.4, 51.90]),
    row("LLaVA-Video-7B", [69.1, 58.7, 68.8, 49.4, 74.3, 59.8, 56.2, 57.4, 7.5], [63.5, 40.4, 51.95]),
    row("Qwen2-VL-7B", [69.1, 53.2, 63.8, 50.6, 66.3, 60.9, 44.4, 66.9, 34.4], [60.7, 48.6, 54.62]),
    row("LongVU-7B", [55.7, 49.5, 59.5, 48.3, 68.3, 63.0, 43.1, 66.2, 9.1], [57.4, 39.5, 48.45]),
    row("VideoLLM-online-8B", [8.1, 23.9, 12.1, 14.0, 45.5, 21.2, 22.2, 18.8, 12.2], [20.8, 17.7, 19.26]),
    row("Flash-VStream-7B", [24.2, 29.4, 28.5, 33.7, 25.7, 28.8, 39.1, 37.2, 5.9], [28.4, 27.4, 27.90]),
    row("Dispider-7B", [57.7, 49.5, 62.1, 44.9, 61.4, 51.6, 48.5, 55.4, 4.3], [54.6, 36.1, 45.35]),
    row("TimeChat-Online-7B", [75.2, 46.8, 70.7, 47.8, 69.3, 61.4, 55.9, 59.5, 9.7], [61.9, 41.7, 51.80]),
    row("StreamForest-7B", [68.5, 53.2, 71.6, 47.8, 65.4, 60.9, 58.9, 64.9, 32.3], [61.2, 52.0, 56.60]),
    row("Streamo-7B", [79.2, 57.8, 75.0, 49.4, 64.4, 70.1, 54.6, 52.0, 31.7], [66.0, 46.1, 56.05]),
    row("HERMES-7B", [85.2, 64.2, 71.6, 53.4, 74.3, 65.2, 48.5, 62.2, 37.6], [69.0, 49.4, 59.20]),
    row("Qwen2.5-VL-7B+2f", [88.6, 67.0, 81.0, 64.6, 69.3, 79.3, 49.2, 56.8, 42.5], [75.0, 49.5, 62.22]),
    row("Qwen2.5-VL-7B+4f", [94.0, 72.5, 80.2, 68.0, 76.2, 79.3, 54.5, 60.8, 40.3], [78.4, 51.9, 65.13]),
    row("Qwen2.5-VL-7B+8f", [95.3, 67.9, 79.3, 61.2, 74.3, 81.5, 52.2, 63.5, 36.6], [76.6, 50.8, 63.70]),
    row("Qwen3-VL-8B+2f", [89.3, 77.1, 83.6, 68.5, 76.2, 81.0, 49.5, 56.1, 54.8], [79.3, 53.5, 66.38]),
    row("Qwen3-VL-8B+4f", [94.0, 85.3, 82.8, 65.7, 77.2, 83.2, 51.9, 58.1, 52.1], [81.4, 54.0, 67.70]),
    row("Qwen3-VL-8B+8f", [94.0, 84.4, 80.2, 64.0, 75.3, 81.5, 53.2, 60.8, 50.5], [79.9, 54.9, 67.37]),
];

/// Rows whose printed averages do not follow from their printed tracks.
pub const INCONSISTENT_ROWS: [&str; 3] = ["LLaVA-Video-7B", "Dispider-7B", "Qwen3-VL-8B+8f"];

pub fn row_named(name: &str) -> &'static Row {
    ROWS.iter().find(|r| r.name == name).expect("known row")
}

/// Recent-window baseline and the same model with visual retrieval added.
pub const ABLATION_BASE: [f64; 9] = [94.0, 78.9, 81.9, 64.0, 77.2, 81.5, 52.5, 58.8, 45.7];
pub const ABLATION_RAG: [f64; 9] = [85.9, 71.6, 81.9, 62.4, 74.3, 72.3, 59.6, 64.9, 33.3];
