//! Desk-scale RLVR laboratory.
//!
//! Trains a tiny tabular autoregressive policy on synthetic verifiable tasks
//! under a clipped-surrogate objective, with every advantage-shaping scheme
//! switchable from config: positive/negative sample reinforcement, polarity
//! scaling, entropy/probability token selection, and adaptive asymmetric
//! shaping with a step-decayed boost.
//!
//! The crate is organized bottom-up:
//!
//! - [`types`]: tokens, prompts, rollouts, polarity, group-relative advantages
//! - [`policy`]: tabular softmax policy with exact probabilities and gradients
//! - [`tasks`]: synthetic verifiable tasks and the binary verifier
//! - [`shaping`]: all advantage transformations
//! - [`optim`]: clipped-surrogate updates, dynamic sampling, Adam ascent
//! - [`metrics`]: entropy/length/reward, n-gram sharpening/discovery,
//!   Avg@K / Pass@K, accuracy-trace categorization
//! - [`config`], [`presets`], [`runner`], [`compare`]: the experiment CLI

pub mod compare;
pub mod config;
pub mod metrics;
pub mod optim;
pub mod policy;
pub mod presets;
pub mod rng;
pub mod runner;
pub mod shaping;
pub mod tasks;
pub mod types;
