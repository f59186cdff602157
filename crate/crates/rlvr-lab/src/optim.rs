//! Clipped-surrogate policy updates with dynamic sampling, asymmetric
//! clipping bounds, token-level loss aggregation, and off-policy minibatch
//! epochs, driven by Adam ascent on the logit table.

use serde::{Deserialize, Serialize};

use crate::metrics::{discovery, sharpening, HistoryRegistry, StepMetrics};
use crate::policy::{grad_logprob, sample_rollout, PolicyParams};
use crate::rng::{domain, stream};
use crate::shaping::{shape_batch, ShapingConfig};
use crate::tasks::{make_prompt, verify, TaskInstance};
use crate::types::{Group, Rollout, Token};

/// Optimizer and rollout-batch configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub eps_low: f64,
    pub eps_high: f64,
    pub learning_rate: f64,
    pub minibatch_count: usize,
    pub dynamic_sampling: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub group_size: usize,
    pub batch_prompts: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            eps_low: 0.2,
            eps_high: 0.28,
            learning_rate: 1e-2,
            minibatch_count: 4,
            dynamic_sampling: true,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            group_size: 8,
            batch_prompts: 32,
        }
    }
}

/// Rollout-generation settings shared by training and evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SamplingConfig {
    pub max_len: usize,
    pub temperature: f64,
}

/// Mutable training state: parameters, the per-batch snapshot, Adam moments,
/// and the global step counter that drives adaptive shaping decay.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: PolicyParams,
    pub old_params: PolicyParams,
    moment1: Vec<f64>,
    moment2: Vec<f64>,
    adam_t: u64,
    pub step: u64,
}

impl TrainState {
    pub fn new(params: PolicyParams) -> TrainState {
        let n = params.logits().len();
        TrainState {
            old_params: params.clone(),
            params,
            moment1: vec![0.0; n],
            moment2: vec![0.0; n],
            adam_t: 0,
            step: 0,
        }
    }

    /// One Adam ascent step. Moments persist across calls; bias correction
    /// uses the number of updates applied so far.
    pub fn apply_update(&mut self, gradient: &[f64], config: &OptimConfig) {
        assert_eq!(gradient.len(), self.params.logits().len());
        self.adam_t += 1;
        let t = self.adam_t as i32;
        let bc1 = 1.0 - config.beta1.powi(t);
        let bc2 = 1.0 - config.beta2.powi(t);
        let logits = self.params.logits_mut();
        for (i, &g) in gradient.iter().enumerate() {
            self.moment1[i] = config.beta1 * self.moment1[i] + (1.0 - config.beta1) * g;
            self.moment2[i] = config.beta2 * self.moment2[i] + (1.0 - config.beta2) * g * g;
            let m_hat = self.moment1[i] / bc1;
            let v_hat = self.moment2[i] / bc2;
            logits[i] += config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
        }
    }
}

/// Drop groups whose rewards are all 0 or all 1. Returns survivors and the
/// effective prompt count. No resampling; the drop is recorded in metrics.
pub fn dynamic_sample_filter(groups: Vec<Group>) -> (Vec<Group>, usize) {
    let kept: Vec<Group> = groups.into_iter().filter(|g| g.has_reward_variance()).collect();
    let count = kept.len();
    (kept, count)
}

/// Token objective `min(r A, clip(r, 1 - eps_low, 1 + eps_high) A)`.
///
/// The flag is true iff the unclipped branch attains the min, i.e. gradient
/// flows through this token.
pub fn clipped_token_objective(
    ratio: f64,
    advantage: f64,
    eps_low: f64,
    eps_high: f64,
) -> (f64, bool) {
    debug_assert!(ratio > 0.0);
    let clipped = ratio.clamp(1.0 - eps_low, 1.0 + eps_high);
    let unclipped_value = ratio * advantage;
    let clipped_value = clipped * advantage;
    if unclipped_value <= clipped_value {
        (unclipped_value, true)
    } else {
        (clipped_value, false)
    }
}

/// One rollout with its shaped per-token advantages, ready for a gradient
/// pass.
pub struct TrainSample<'a> {
    pub prompt_tokens: &'a [Token],
    pub rollout: &'a Rollout,
    pub advantages: &'a [f64],
}

/// Gradient of one minibatch plus the bookkeeping the metrics row needs.
pub struct GradientReport {
    pub gradient: Vec<f64>,
    pub total_tokens: usize,
    pub clipped_tokens: usize,
    pub abs_prob_gap_sum: f64,
}

/// Gradient of the token-mean clipped objective over all tokens of the given
/// samples.
///
/// The ratio denominator is the rollout's stored sampling-time probability
/// (the old-policy evaluation); the numerator is recomputed under `params`.
/// Clipped tokens contribute zero gradient but still count in the
/// normalizer.
pub fn batch_gradient(
    params: &PolicyParams,
    samples: &[TrainSample],
    eps_low: f64,
    eps_high: f64,
) -> GradientReport {
    let mut gradient = vec![0.0; params.logits().len()];
    let mut total_tokens = 0usize;
    let mut clipped_tokens = 0usize;
    let mut abs_prob_gap_sum = 0.0f64;

    for sample in samples {
        let mut seq: Vec<Token> = sample.prompt_tokens.to_vec();
        for (t, &tok) in sample.rollout.tokens.iter().enumerate() {
            let dist = params
                .token_distribution(&seq, 1.0)
                .expect("training tokens are in-vocabulary");
            let p_new = dist[tok.0 as usize];
            abs_prob_gap_sum += (p_new - sample.rollout.probs[t]).abs();
            total_tokens += 1;

            let ratio = (p_new.ln() - sample.rollout.logprobs[t]).exp();
            let advantage = sample.advantages[t];
            let (_, pass_through) = clipped_token_objective(ratio, advantage, eps_low, eps_high);
            if !pass_through {
                clipped_tokens += 1;
            } else if advantage != 0.0 {
                let (row, grad_row) =
                    grad_logprob(params, &seq, tok).expect("training tokens are in-vocabulary");
                let scale = advantage * ratio;
                let base = row * params.vocab();
                for (v, g) in grad_row.iter().enumerate() {
                    gradient[base + v] += scale * g;
                }
            }
            seq.push(tok);
        }
    }
    if total_tokens > 0 {
        let inv = 1.0 / total_tokens as f64;
        for g in &mut gradient {
            *g *= inv;
        }
    }
    GradientReport {
        gradient,
        total_tokens,
        clipped_tokens,
        abs_prob_gap_sum,
    }
}

/// One full training step: snapshot, rollouts, verification, grouping,
/// dynamic sampling, shaping, minibatch gradient/update passes, metrics.
///
/// A batch with no surviving groups performs no update and is flagged by
/// `effective_prompts = 0`.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    state: &mut TrainState,
    batch: &[TaskInstance],
    shaping: &ShapingConfig,
    config: &OptimConfig,
    sampling: &SamplingConfig,
    seed: u64,
    history: &mut HistoryRegistry,
) -> StepMetrics {
    let s = state.step;
    state.old_params = state.params.clone();

    // rollout phase, under the snapshot
    let mut groups: Vec<Group> = Vec::with_capacity(batch.len());
    for (pi, instance) in batch.iter().enumerate() {
        let prompt = make_prompt(instance);
        let mut rollouts = Vec::with_capacity(config.group_size);
        for g in 0..config.group_size {
            let mut rng = stream(seed, domain::ROLLOUT, s, ((pi as u64) << 32) | g as u64);
            let mut rollout = sample_rollout(
                &state.old_params,
                &prompt,
                &mut rng,
                sampling.max_len,
                sampling.temperature,
            );
            rollout.reward = verify(instance, &rollout.tokens).reward;
            rollouts.push(rollout);
        }
        groups.push(Group::from_rollouts(prompt, rollouts).expect("group_size >= 2"));
    }

    // sampled-batch metrics, before any filtering
    let mut token_count = 0usize;
    let mut entropy_sum = 0.0;
    let mut length_sum = 0.0;
    let mut reward_sum = 0.0;
    let mut rollout_count = 0usize;
    let mut sharpening_sum = 0.0;
    let mut discovery_sum = 0.0;
    for group in &groups {
        let hist = history.history(group.prompt.instance_id).cloned().unwrap_or_default();
        for rollout in &group.rollouts {
            entropy_sum += rollout.entropies.iter().sum::<f64>();
            token_count += rollout.len();
            length_sum += rollout.len() as f64;
            reward_sum += rollout.reward as f64;
            sharpening_sum += sharpening(&rollout.tokens, &hist, history.n);
            discovery_sum += discovery(&rollout.tokens, &hist, history.n);
            rollout_count += 1;
        }
    }
    for group in &groups {
        let n = history.n;
        let hist = history.history_mut(group.prompt.instance_id);
        for rollout in &group.rollouts {
            crate::metrics::update_history(hist, &rollout.tokens, rollout.reward, n);
        }
    }

    let (kept, effective_prompts) = if config.dynamic_sampling {
        dynamic_sample_filter(groups)
    } else {
        let n = groups.len();
        (groups, n)
    };

    let shaped = shape_batch(shaping, &kept, s);

    // flatten kept rollouts and shuffle into minibatch shards
    let samples: Vec<(usize, usize)> = kept
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| (0..g.rollouts.len()).map(move |ri| (gi, ri)))
        .collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    shuffle(&mut order, seed, s);

    let mut clipped_tokens = 0usize;
    let mut trained_tokens = 0usize;
    let mut gap_sum = 0.0f64;
    if !samples.is_empty() {
        let shard_bounds = shard_ranges(order.len(), config.minibatch_count);
        for (lo, hi) in shard_bounds {
            if lo == hi {
                continue;
            }
            let shard: Vec<TrainSample> = order[lo..hi]
                .iter()
                .map(|&flat| {
                    // `samples` and `shape_batch` share the group-major flatten order
                    let (gi, ri) = samples[flat];
                    TrainSample {
                        prompt_tokens: &kept[gi].prompt.tokens,
                        rollout: &kept[gi].rollouts[ri],
                        advantages: &shaped.advantages[flat],
                    }
                })
                .collect();
            let report = batch_gradient(&state.params, &shard, config.eps_low, config.eps_high);
            clipped_tokens += report.clipped_tokens;
            trained_tokens += report.total_tokens;
            gap_sum += report.abs_prob_gap_sum;
            state.apply_update(&report.gradient, config);
        }
    }

    state.step += 1;
    StepMetrics {
        step: state.step,
        mean_entropy: if token_count > 0 { entropy_sum / token_count as f64 } else { 0.0 },
        mean_length: if rollout_count > 0 { length_sum / rollout_count as f64 } else { 0.0 },
        mean_reward: if rollout_count > 0 { reward_sum / rollout_count as f64 } else { 0.0 },
        sharpening: if rollout_count > 0 { sharpening_sum / rollout_count as f64 } else { 0.0 },
        discovery: if rollout_count > 0 { discovery_sum / rollout_count as f64 } else { 0.0 },
        clip_fraction: if trained_tokens > 0 {
            clipped_tokens as f64 / trained_tokens as f64
        } else {
            0.0
        },
        effective_prompts,
        shaped_token_fraction: shaped.shaped_token_fraction,
        mean_abs_prob_gap: if trained_tokens > 0 { gap_sum / trained_tokens as f64 } else { 0.0 },
    }
}

fn shuffle(order: &mut [usize], seed: u64, step: u64) {
    use rand::seq::SliceRandom;
    let mut rng = stream(seed, domain::SHUFFLE, step, 0);
    order.shuffle(&mut rng);
}

/// Split `len` items into `count` near-equal contiguous ranges.
fn shard_ranges(len: usize, count: usize) -> Vec<(usize, usize)> {
    let count = count.max(1);
    let base = len / count;
    let extra = len % count;
    let mut ranges = Vec::with_capacity(count);
    let mut lo = 0;
    for i in 0..count {
        let size = base + usize::from(i < extra);
        ranges.push((lo, lo + size));
        lo += size;
    }
    ranges
}
