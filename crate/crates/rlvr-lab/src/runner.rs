//! Config-driven experiment execution.
//!
//! A run trains for `total_steps`, evaluates the held-out split every
//! `eval_every` steps at the evaluation temperature, categorizes every
//! validation prompt's accuracy trace at the end, and writes all artifacts
//! (metrics.csv, eval.csv, traces.csv, checkpoint, resolved-config echo,
//! optional rollout dumps). Every output byte is determined by
//! (config, seed).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, NgramScope};
use crate::metrics::{categorize_trace, HistoryRegistry, StepMetrics};
use crate::optim::{train_step, SamplingConfig, TrainState};
use crate::policy::{sample_rollout, PolicyParams};
use crate::rng::{domain, stream};
use crate::tasks::{
    enumerate_instances, make_prompt, sample_instance, split_of, verify, Split, TaskInstance,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io failure at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One evaluation checkpoint over the validation prompt set.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub step: u64,
    pub avg_at_k: f64,
    pub pass_at_k: f64,
    pub mean_eval_entropy: f64,
    pub mean_eval_length: f64,
    /// Per-prompt mean reward, aligned with the run's validation prompt
    /// order.
    pub per_prompt_accuracy: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub instance_id: u64,
    pub category: String,
    pub trace: Vec<f64>,
}

/// Everything a finished run produced, in memory.
#[derive(Debug)]
pub struct RunResult {
    /// Resolved config with `run.seeds` narrowed to the executing seed, so
    /// re-running from the echo reproduces this run exactly.
    pub config: ExperimentConfig,
    pub seed: u64,
    pub metrics: Vec<StepMetrics>,
    pub evals: Vec<EvalRecord>,
    pub traces: Vec<TraceRecord>,
    pub validation_ids: Vec<u64>,
    pub final_params: PolicyParams,
    /// JSONL lines for the optional rollout dump (evaluation rollouts).
    pub rollout_dump: Vec<String>,
}

/// Deterministic, seed-independent validation prompt set: enumeration order
/// filtered to the validation split, capped at `eval_prompts`.
pub fn validation_set(config: &ExperimentConfig) -> Vec<TaskInstance> {
    enumerate_instances(config.task.kind, &config.task.ranges())
        .into_iter()
        .filter(|i| split_of(i) == Split::Validation)
        .take(config.run.eval_prompts)
        .collect()
}

fn sample_train_batch(config: &ExperimentConfig, seed: u64, step: u64) -> Vec<TaskInstance> {
    let ranges = config.task.ranges();
    let mut rng = stream(seed, domain::TASK, step, 0);
    let mut batch = Vec::with_capacity(config.optim.batch_prompts);
    while batch.len() < config.optim.batch_prompts {
        let instance = sample_instance(config.task.kind, &ranges, &mut rng);
        if split_of(&instance) == Split::Train {
            batch.push(instance);
        }
    }
    batch
}

/// Train and evaluate one seed entirely in memory.
pub fn execute(config: &ExperimentConfig, seed: u64) -> Result<RunResult, RunError> {
    config.validate()?;
    let mut resolved = config.clone();
    resolved.run.seeds = vec![seed];

    let params = PolicyParams::zeros(config.policy.vocab_size, config.policy.order);
    let mut state = TrainState::new(params);
    let mut history = HistoryRegistry::new(
        config.run.ngram_n[0],
        matches!(config.run.ngram_scope, NgramScope::Global),
    );
    let train_sampling = SamplingConfig {
        max_len: config.policy.max_len,
        temperature: config.policy.temperature,
    };

    let val_set = validation_set(config);
    let validation_ids: Vec<u64> = val_set.iter().map(|i| i.id()).collect();

    let mut metrics = Vec::with_capacity(config.run.total_steps as usize);
    let mut evals = Vec::new();
    let mut rollout_dump = Vec::new();

    for _ in 0..config.run.total_steps {
        let batch = sample_train_batch(config, seed, state.step);
        let step_metrics = train_step(
            &mut state,
            &batch,
            &config.shaping,
            &config.optim,
            &train_sampling,
            seed,
            &mut history,
        );
        let step = step_metrics.step;
        metrics.push(step_metrics);

        if step % config.run.eval_every == 0 {
            evals.push(evaluate(
                config,
                seed,
                step,
                &state.params,
                &val_set,
                &mut rollout_dump,
            ));
        }
    }

    let traces = val_set
        .iter()
        .enumerate()
        .map(|(vi, instance)| {
            let trace: Vec<f64> = evals.iter().map(|e| e.per_prompt_accuracy[vi]).collect();
            let category = categorize_trace(&trace, config.run.trace_k, config.run.trace_window)
                .map(|c| c.as_str().to_string())
                .unwrap_or_else(|_| "undetermined".to_string());
            TraceRecord {
                instance_id: instance.id(),
                category,
                trace,
            }
        })
        .collect();

    Ok(RunResult {
        config: resolved,
        seed,
        metrics,
        evals,
        traces,
        validation_ids,
        final_params: state.params.clone(),
        rollout_dump,
    })
}

fn evaluate(
    config: &ExperimentConfig,
    seed: u64,
    step: u64,
    params: &PolicyParams,
    val_set: &[TaskInstance],
    rollout_dump: &mut Vec<String>,
) -> EvalRecord {
    let mut results: Vec<Vec<u8>> = Vec::with_capacity(val_set.len());
    let mut entropy_sum = 0.0;
    let mut token_count = 0usize;
    let mut length_sum = 0.0;
    let mut rollout_count = 0usize;
    for (vi, instance) in val_set.iter().enumerate() {
        let prompt = make_prompt(instance);
        let mut row = Vec::with_capacity(config.run.eval_k);
        for k in 0..config.run.eval_k {
            let mut rng = stream(seed, domain::EVAL, step, ((vi as u64) << 32) | k as u64);
            let rollout = sample_rollout(
                params,
                &prompt,
                &mut rng,
                config.policy.max_len,
                config.run.eval_temperature,
            );
            let reward = verify(instance, &rollout.tokens).reward;
            entropy_sum += rollout.entropies.iter().sum::<f64>();
            token_count += rollout.len();
            length_sum += rollout.len() as f64;
            rollout_count += 1;
            if config.run.dump_rollouts {
                let obj = json!({
                    "step": step,
                    "prompt_id": instance.id(),
                    "tokens": rollout.tokens.iter().map(|t| t.0).collect::<Vec<u16>>(),
                    "probs": rollout.probs,
                    "entropies": rollout.entropies,
                    "reward": reward,
                });
                rollout_dump.push(obj.to_string());
            }
            row.push(reward);
        }
        results.push(row);
    }
    let per_prompt_accuracy = results
        .iter()
        .map(|row| {
            if row.is_empty() {
                0.0
            } else {
                row.iter().map(|&r| r as f64).sum::<f64>() / row.len() as f64
            }
        })
        .collect();
    EvalRecord {
        step,
        avg_at_k: crate::metrics::avg_at_k(&results),
        pass_at_k: crate::metrics::pass_at_k(&results),
        mean_eval_entropy: if token_count > 0 {
            entropy_sum / token_count as f64
        } else {
            0.0
        },
        mean_eval_length: if rollout_count > 0 {
            length_sum / rollout_count as f64
        } else {
            0.0
        },
        per_prompt_accuracy,
    }
}

fn header_line(seed: u64) -> String {
    format!("# format_version={FORMAT_VERSION} seed={seed}\n")
}

pub fn metrics_csv(result: &RunResult) -> String {
    let mut out = header_line(result.seed);
    out.push_str(StepMetrics::CSV_HEADER);
    out.push('\n');
    for row in &result.metrics {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}

pub const EVAL_CSV_HEADER: &str = "step,avg_at_k,pass_at_k,mean_eval_entropy,mean_eval_length";

pub fn eval_csv(result: &RunResult) -> String {
    let mut out = header_line(result.seed);
    out.push_str(EVAL_CSV_HEADER);
    out.push('\n');
    for e in &result.evals {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.step, e.avg_at_k, e.pass_at_k, e.mean_eval_entropy, e.mean_eval_length
        )
        .unwrap();
    }
    out
}

pub fn traces_csv(result: &RunResult) -> String {
    let mut out = header_line(result.seed);
    out.push_str("instance_id,category,trace\n");
    for t in &result.traces {
        let trace = t
            .trace
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(";");
        writeln!(out, "{},{},{}", t.instance_id, t.category, trace).unwrap();
    }
    out
}

pub fn checkpoint_text(result: &RunResult) -> String {
    let mut out = header_line(result.seed);
    writeln!(out, "vocab={}", result.final_params.vocab()).unwrap();
    writeln!(out, "order={}", result.final_params.order()).unwrap();
    for l in result.final_params.logits() {
        writeln!(out, "{l:?}").unwrap();
    }
    out
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write all run artifacts into `dir` (created if absent).
pub fn write_artifacts(result: &RunResult, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let config_echo = format!("{}{}", header_line(result.seed), result.config.to_toml());
    write_file(dir, "config.toml", &config_echo)?;
    write_file(dir, "metrics.csv", &metrics_csv(result))?;
    write_file(dir, "eval.csv", &eval_csv(result))?;
    write_file(dir, "traces.csv", &traces_csv(result))?;
    write_file(dir, "checkpoint.txt", &checkpoint_text(result))?;
    if result.config.run.dump_rollouts {
        let mut body = header_line(result.seed);
        for line in &result.rollout_dump {
            body.push_str(line);
            body.push('\n');
        }
        write_file(dir, "rollouts.jsonl", &body)?;
    }
    Ok(())
}

/// Execute one seed and write its artifacts.
pub fn run_to_dir(
    config: &ExperimentConfig,
    seed: u64,
    dir: &Path,
) -> Result<RunResult, RunError> {
    let result = execute(config, seed)?;
    write_artifacts(&result, dir)?;
    Ok(result)
}
