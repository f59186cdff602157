//! Experiment configuration: a sectioned key-value file (TOML syntax) with
//! strict schemas (unknown keys are hard errors) and validation that reports
//! field paths.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::OptimConfig;
use crate::shaping::ShapingConfig;
use crate::tasks::{TaskKind, TaskRanges};
use crate::types::VOCAB_SIZE;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config at {field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub kind: TaskKind,
    pub digit_sum_min: u32,
    pub digit_sum_max: u32,
    pub operand_max: u32,
    pub moduli: Vec<u32>,
}

impl Default for TaskSection {
    fn default() -> Self {
        let r = TaskRanges::default();
        TaskSection {
            kind: TaskKind::DigitSum,
            digit_sum_min: r.digit_sum_min,
            digit_sum_max: r.digit_sum_max,
            operand_max: r.operand_max,
            moduli: r.moduli,
        }
    }
}

impl TaskSection {
    pub fn ranges(&self) -> TaskRanges {
        TaskRanges {
            digit_sum_min: self.digit_sum_min,
            digit_sum_max: self.digit_sum_max,
            operand_max: self.operand_max,
            moduli: self.moduli.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    /// Context order m: the policy conditions on the last m tokens.
    pub order: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    /// Training-time sampling temperature.
    pub temperature: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            order: 3,
            vocab_size: VOCAB_SIZE,
            max_len: 24,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NgramScope {
    Prompt,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Label used to group seeds of the same condition in comparisons.
    pub name: String,
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_k: usize,
    /// Cap on the number of validation prompts evaluated per checkpoint.
    pub eval_prompts: usize,
    pub eval_temperature: f64,
    pub seeds: Vec<u64>,
    pub ngram_n: Vec<usize>,
    pub ngram_scope: NgramScope,
    /// Accuracy-trace categorization threshold, absolute accuracy points.
    pub trace_k: f64,
    /// Accuracy-trace categorization window, in eval checkpoints.
    pub trace_window: usize,
    pub dump_rollouts: bool,
    pub output_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            name: "run".to_string(),
            total_steps: 300,
            eval_every: 5,
            eval_k: 32,
            eval_prompts: 16,
            eval_temperature: 0.6,
            seeds: vec![42],
            ngram_n: vec![3, 4],
            ngram_scope: NgramScope::Prompt,
            trace_k: 0.10,
            trace_window: 3,
            dump_rollouts: false,
            output_dir: "runs/out".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: TaskSection,
    pub policy: PolicySection,
    pub optim: OptimConfig,
    pub shaping: ShapingConfig,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.task.digit_sum_min > self.task.digit_sum_max {
            return Err(invalid("task.digit_sum_min", "min exceeds max"));
        }
        if self.task.moduli.is_empty() || self.task.moduli.iter().any(|&m| m < 2) {
            return Err(invalid("task.moduli", "need at least one modulus >= 2"));
        }
        if self.policy.order < 1 {
            return Err(invalid("policy.order", "must be >= 1"));
        }
        if self.policy.vocab_size != VOCAB_SIZE {
            return Err(invalid(
                "policy.vocab_size",
                format!("task vocabulary is fixed at {VOCAB_SIZE}"),
            ));
        }
        if self.policy.max_len < 1 {
            return Err(invalid("policy.max_len", "must be >= 1"));
        }
        if self.policy.temperature <= 0.0 {
            return Err(invalid("policy.temperature", "must be > 0"));
        }
        if self.optim.eps_low <= 0.0 || self.optim.eps_low > self.optim.eps_high {
            return Err(invalid("optim.eps_low", "need 0 < eps_low <= eps_high"));
        }
        if self.optim.learning_rate <= 0.0 {
            return Err(invalid("optim.learning_rate", "must be > 0"));
        }
        if self.optim.minibatch_count < 1 {
            return Err(invalid("optim.minibatch_count", "must be >= 1"));
        }
        if self.optim.group_size < 2 {
            return Err(invalid("optim.group_size", "must be >= 2"));
        }
        if self.optim.batch_prompts < 1 {
            return Err(invalid("optim.batch_prompts", "must be >= 1"));
        }
        if !(self.shaping.ratio > 0.0 && self.shaping.ratio <= 1.0) {
            return Err(invalid("shaping.ratio", "must be in (0, 1]"));
        }
        if self.shaping.rho_pos < 1.0 || self.shaping.rho_neg < 1.0 {
            return Err(invalid("shaping.rho_pos", "rho must be >= 1"));
        }
        if self.shaping.alpha_pos < 0.0 || self.shaping.alpha_neg < 0.0 {
            return Err(invalid("shaping.alpha_pos", "alpha must be >= 0"));
        }
        if self.shaping.beta_p < 0.0 || self.shaping.beta_n < 0.0 || self.shaping.beta_t < 0.0 {
            return Err(invalid("shaping.beta_p", "beta factors must be >= 0"));
        }
        if self.run.total_steps < 1 {
            return Err(invalid("run.total_steps", "must be >= 1"));
        }
        if self.run.eval_every < 1 {
            return Err(invalid("run.eval_every", "must be >= 1"));
        }
        if self.run.eval_k < 1 {
            return Err(invalid("run.eval_k", "must be >= 1"));
        }
        if self.run.eval_prompts < 1 {
            return Err(invalid("run.eval_prompts", "must be >= 1"));
        }
        if self.run.eval_temperature <= 0.0 {
            return Err(invalid("run.eval_temperature", "must be > 0"));
        }
        if self.run.seeds.is_empty() {
            return Err(invalid("run.seeds", "need at least one seed"));
        }
        if self.run.ngram_n.is_empty() || self.run.ngram_n.iter().any(|&n| n < 1) {
            return Err(invalid("run.ngram_n", "need at least one n >= 1"));
        }
        if !(self.run.trace_k > 0.0 && self.run.trace_k < 1.0) {
            return Err(invalid("run.trace_k", "must be in (0, 1)"));
        }
        if self.run.trace_window < 1 {
            return Err(invalid("run.trace_window", "must be >= 1"));
        }
        Ok(())
    }
}
