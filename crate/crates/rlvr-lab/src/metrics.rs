//! Training-dynamics analyses: n-gram sharpening/discovery, Avg@K / Pass@K,
//! accuracy-trace categorization, and the rollout-time vs update-time
//! probability-gap proxy.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Token;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("trace of {len} checkpoints is shorter than 2 windows of {window}")]
    TraceTooShort { len: usize, window: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// All contiguous length-n token windows, as a set.
pub fn ngram_set(tokens: &[Token], n: usize) -> HashSet<Vec<u16>> {
    assert!(n >= 1);
    if tokens.len() < n {
        return HashSet::new();
    }
    tokens
        .windows(n)
        .map(|w| w.iter().map(|t| t.0).collect())
        .collect()
}

/// Per-prompt record of n-grams seen in prior rollouts.
#[derive(Debug, Clone, Default)]
pub struct NGramHistory {
    pub seen_any: HashSet<Vec<u16>>,
    pub seen_correct: HashSet<Vec<u16>>,
}

/// Fraction of the rollout's n-grams that appeared in a prior correct
/// rollout. 0 when the rollout has no n-grams.
pub fn sharpening(tokens: &[Token], history: &NGramHistory, n: usize) -> f64 {
    let grams = ngram_set(tokens, n);
    if grams.is_empty() {
        return 0.0;
    }
    let hits = grams.iter().filter(|g| history.seen_correct.contains(*g)).count();
    hits as f64 / grams.len() as f64
}

/// Fraction of the rollout's n-grams never seen in any prior rollout.
/// 0 when the rollout has no n-grams.
pub fn discovery(tokens: &[Token], history: &NGramHistory, n: usize) -> f64 {
    let grams = ngram_set(tokens, n);
    if grams.is_empty() {
        return 0.0;
    }
    let new = grams.iter().filter(|g| !history.seen_any.contains(*g)).count();
    new as f64 / grams.len() as f64
}

/// Record a rollout's n-grams. Call only after the step's metrics are
/// computed.
pub fn update_history(history: &mut NGramHistory, tokens: &[Token], reward: u8, n: usize) {
    for gram in ngram_set(tokens, n) {
        if reward == 1 {
            history.seen_correct.insert(gram.clone());
        }
        history.seen_any.insert(gram);
    }
}

/// N-gram histories keyed by prompt instance. A global scope collapses all
/// prompts into one shared history for sensitivity checks.
#[derive(Debug, Clone)]
pub struct HistoryRegistry {
    pub n: usize,
    global: bool,
    map: HashMap<u64, NGramHistory>,
}

impl HistoryRegistry {
    pub fn new(n: usize, global: bool) -> HistoryRegistry {
        HistoryRegistry {
            n,
            global,
            map: HashMap::new(),
        }
    }

    fn key(&self, instance_id: u64) -> u64 {
        if self.global {
            0
        } else {
            instance_id
        }
    }

    pub fn history(&self, instance_id: u64) -> Option<&NGramHistory> {
        self.map.get(&self.key(instance_id))
    }

    pub fn history_mut(&mut self, instance_id: u64) -> &mut NGramHistory {
        self.map.entry(self.key(instance_id)).or_default()
    }
}

/// Grand mean over the P x K result matrix.
pub fn avg_at_k(results: &[Vec<u8>]) -> f64 {
    let total: usize = results.iter().map(Vec::len).sum();
    if total == 0 {
        return 0.0;
    }
    let hits: u32 = results.iter().flatten().map(|&r| r as u32).sum();
    hits as f64 / total as f64
}

/// Fraction of prompts with at least one success among their K samples.
pub fn pass_at_k(results: &[Vec<u8>]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let solved = results.iter().filter(|row| row.iter().any(|&r| r == 1)).count();
    solved as f64 / results.len() as f64
}

/// Mean absolute per-token probability gap between rollout-time and
/// update-time policy evaluations.
pub fn prob_gap(rollout_probs: &[f64], update_probs: &[f64]) -> Result<f64, MetricsError> {
    if rollout_probs.len() != update_probs.len() {
        return Err(MetricsError::LengthMismatch(
            rollout_probs.len(),
            update_probs.len(),
        ));
    }
    if rollout_probs.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = rollout_probs
        .iter()
        .zip(update_probs)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / rollout_probs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceCategory {
    Sharpen,
    Degradation,
    Fluctuation,
    Mastery,
    Struggle,
}

impl TraceCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceCategory::Sharpen => "sharpen",
            TraceCategory::Degradation => "degradation",
            TraceCategory::Fluctuation => "fluctuation",
            TraceCategory::Mastery => "mastery",
            TraceCategory::Struggle => "struggle",
        }
    }
}

/// Categorize one validation prompt's accuracy trace.
///
/// `k` is in absolute accuracy points (0.10 = ten points). Precedence:
/// Mastery and Struggle (whole-trace bounds) win over Sharpen/Degradation
/// (windowed first-vs-last change, strict inequality), which win over
/// Fluctuation.
pub fn categorize_trace(
    trace: &[f64],
    k: f64,
    window: usize,
) -> Result<TraceCategory, MetricsError> {
    assert!(window >= 1);
    if trace.len() < 2 * window {
        return Err(MetricsError::TraceTooShort {
            len: trace.len(),
            window,
        });
    }
    if trace.iter().all(|&a| a > 1.0 - k) {
        return Ok(TraceCategory::Mastery);
    }
    if trace.iter().all(|&a| a < k) {
        return Ok(TraceCategory::Struggle);
    }
    let first: f64 = trace[..window].iter().sum::<f64>() / window as f64;
    let last: f64 = trace[trace.len() - window..].iter().sum::<f64>() / window as f64;
    if last - first > k {
        Ok(TraceCategory::Sharpen)
    } else if first - last > k {
        Ok(TraceCategory::Degradation)
    } else {
        Ok(TraceCategory::Fluctuation)
    }
}

/// One row of training metrics; serialized as one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub mean_entropy: f64,
    pub mean_length: f64,
    pub mean_reward: f64,
    pub sharpening: f64,
    pub discovery: f64,
    pub clip_fraction: f64,
    pub effective_prompts: usize,
    pub shaped_token_fraction: f64,
    pub mean_abs_prob_gap: f64,
}

impl StepMetrics {
    pub const CSV_HEADER: &'static str = "step,mean_entropy,mean_length,mean_reward,sharpening,discovery,clip_fraction,effective_prompts,shaped_token_fraction,mean_abs_prob_gap";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.mean_entropy,
            self.mean_length,
            self.mean_reward,
            self.sharpening,
            self.discovery,
            self.clip_fraction,
            self.effective_prompts,
            self.shaped_token_fraction,
            self.mean_abs_prob_gap
        )
    }
}
