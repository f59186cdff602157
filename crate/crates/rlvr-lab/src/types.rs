//! Shared domain types: tokens, prompts, rollouts, sample polarity, and
//! group-relative advantage computation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token id into the task vocabulary.
///
/// Layout is fixed across the whole lab: ids `0..=9` are digits, then
/// [`SEP`], [`EOS`], [`BOS`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u16);

/// Field separator inside prompts.
pub const SEP: Token = Token(10);
/// End-of-sequence marker; terminates responses, never appears in prompts.
pub const EOS: Token = Token(11);
/// Begin-of-sequence padding symbol for contexts shorter than the policy order.
pub const BOS: Token = Token(12);
/// Total vocabulary size (10 digits + SEP + EOS + BOS).
pub const VOCAB_SIZE: usize = 13;

impl Token {
    pub fn digit(d: u32) -> Token {
        debug_assert!(d < 10);
        Token(d as u16)
    }

    /// Digit value if this token is a digit, else `None`.
    pub fn as_digit(self) -> Option<u32> {
        if self.0 < 10 {
            Some(self.0 as u32)
        } else {
            None
        }
    }
}

/// A task prompt: non-empty token sequence (never containing EOS) plus the
/// opaque id of the task instance it encodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub tokens: Vec<Token>,
    pub instance_id: u64,
}

/// One sampled response with its sampling-time statistics.
///
/// `probs`, `logprobs`, and `entropies` are aligned with `tokens`: for each
/// response position they record the sampled token's probability, its log,
/// and the full-distribution entropy (nats) under the sampling policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub prompt_ref: u64,
    pub tokens: Vec<Token>,
    pub probs: Vec<f64>,
    pub logprobs: Vec<f64>,
    pub entropies: Vec<f64>,
    /// Binary verifier reward.
    pub reward: u8,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Sample polarity: positive iff the rollout earned reward 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

/// Polarity is a pure function of the reward.
pub fn polarity_of(rollout: &Rollout) -> Polarity {
    if rollout.reward == 1 {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("group needs at least 2 rollouts, got {0}")]
    GroupTooSmall(usize),
}

/// Group-relative advantages: standardize binary rewards within the group
/// using the population standard deviation.
///
/// Zero-variance groups (all rewards equal) return all zeros so the same
/// code path works whether or not dynamic sampling removes them upstream.
pub fn group_advantage(rewards: &[u8]) -> Result<Vec<f64>, GroupError> {
    let g = rewards.len();
    if g < 2 {
        return Err(GroupError::GroupTooSmall(g));
    }
    let first = rewards[0];
    if rewards.iter().all(|&r| r == first) {
        return Ok(vec![0.0; g]);
    }
    let mean = rewards.iter().map(|&r| r as f64).sum::<f64>() / g as f64;
    let var = rewards
        .iter()
        .map(|&r| {
            let d = r as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / g as f64;
    let sigma = var.sqrt();
    Ok(rewards.iter().map(|&r| (r as f64 - mean) / sigma).collect())
}

/// G rollouts for one prompt plus their group-relative advantages.
///
/// The advantage is broadcast uniformly to every token of a rollout before
/// any shaping is applied (outcome-only binary reward).
#[derive(Debug, Clone)]
pub struct Group {
    pub prompt: Prompt,
    pub rollouts: Vec<Rollout>,
    pub advantages: Vec<f64>,
}

impl Group {
    pub fn from_rollouts(prompt: Prompt, rollouts: Vec<Rollout>) -> Result<Group, GroupError> {
        let rewards: Vec<u8> = rollouts.iter().map(|r| r.reward).collect();
        let advantages = group_advantage(&rewards)?;
        Ok(Group {
            prompt,
            rollouts,
            advantages,
        })
    }

    /// True iff the group's rewards are not all equal.
    pub fn has_reward_variance(&self) -> bool {
        let first = self.rollouts[0].reward;
        self.rollouts.iter().any(|r| r.reward != first)
    }
}
