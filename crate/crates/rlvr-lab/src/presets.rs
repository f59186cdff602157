//! Named experiment families, fully resolved to configs.
//!
//! Single-condition presets cover the training paradigms (psr, nsr, dapo,
//! w-reinforce, fork-tokens, a3po); grid presets cover the polarity-scale
//! sweep, the token-selection quadrants, the shaped-ratio ablation, and the
//! adaptive-shaping hyperparameter sweep.

use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::shaping::{
    SelectionCriterion, SelectionSide, ShapingMode, TargetPolarity,
};

#[derive(Debug, Error)]
#[error("unknown preset: {0}")]
pub struct UnknownPreset(pub String);

pub const PRESET_NAMES: &[&str] = &[
    "psr",
    "nsr",
    "dapo",
    "w-reinforce",
    "fork-tokens",
    "a3po",
    "polarity-grid",
    "token-grid",
    "ratio-ablation",
    "hyper-grid",
];

fn base(name: &str) -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.run.name = name.to_string();
    config
}

/// Compact float tag for grid config names ("0.2" -> "0.2", "5" -> "5").
fn tag(x: f64) -> String {
    if x == x.trunc() {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn psr() -> ExperimentConfig {
    let mut config = base("psr");
    config.shaping.mode = ShapingMode::Psr;
    config.optim.dynamic_sampling = false;
    config
}

fn nsr() -> ExperimentConfig {
    let mut config = base("nsr");
    config.shaping.mode = ShapingMode::Nsr;
    config.optim.dynamic_sampling = false;
    config
}

fn dapo() -> ExperimentConfig {
    let mut config = base("dapo");
    config.shaping.mode = ShapingMode::None;
    config.optim.dynamic_sampling = true;
    config
}

fn w_reinforce() -> ExperimentConfig {
    // Down-weight positive rollouts so the negative side dominates.
    let mut config = base("w-reinforce");
    config.shaping.mode = ShapingMode::PolarityScale;
    config.shaping.beta_p = 0.5;
    config.shaping.beta_n = 1.0;
    config.optim.dynamic_sampling = false;
    config
}

fn fork_tokens() -> ExperimentConfig {
    // Mask the 80% lowest-entropy tokens; update only the high-entropy rest.
    let mut config = base("fork-tokens");
    config.shaping.mode = ShapingMode::TokenScale;
    config.shaping.criterion = SelectionCriterion::Entropy;
    config.shaping.side = SelectionSide::Bottom;
    config.shaping.target_polarity = TargetPolarity::Both;
    config.shaping.ratio = 0.8;
    config.shaping.beta_t = 0.0;
    config.optim.dynamic_sampling = true;
    config
}

fn a3po() -> ExperimentConfig {
    let mut config = base("a3po");
    config.shaping.mode = ShapingMode::A3po;
    config.optim.dynamic_sampling = true;
    config
}

/// One-sided scales {0.2, 0.5, 2, 5} on each polarity plus the neutral
/// (1, 1) baseline: nine conditions.
fn polarity_grid() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    let mut push = |beta_p: f64, beta_n: f64| {
        let mut config = base(&format!("polarity-p{}-n{}", tag(beta_p), tag(beta_n)));
        config.shaping.mode = ShapingMode::PolarityScale;
        config.shaping.beta_p = beta_p;
        config.shaping.beta_n = beta_n;
        config.optim.dynamic_sampling = false;
        out.push(config);
    };
    push(1.0, 1.0);
    for scale in [0.2, 0.5, 2.0, 5.0] {
        push(scale, 1.0);
    }
    for scale in [0.2, 0.5, 2.0, 5.0] {
        push(1.0, scale);
    }
    out
}

/// Every (polarity, criterion, side) quadrant at scales 0.2 and 5 on the
/// selected 20% of tokens: sixteen conditions.
fn token_grid() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for (polarity, ptag) in [
        (TargetPolarity::Positive, "pos"),
        (TargetPolarity::Negative, "neg"),
    ] {
        for (criterion, ctag) in [
            (SelectionCriterion::Entropy, "ent"),
            (SelectionCriterion::Probability, "prob"),
        ] {
            for (side, stag) in [
                (SelectionSide::Top, "top"),
                (SelectionSide::Bottom, "bottom"),
            ] {
                for beta_t in [0.2, 5.0] {
                    let mut config = base(&format!(
                        "token-{ptag}-{ctag}-{stag}-x{}",
                        tag(beta_t)
                    ));
                    config.shaping.mode = ShapingMode::TokenScale;
                    config.shaping.target_polarity = polarity;
                    config.shaping.criterion = criterion;
                    config.shaping.side = side;
                    config.shaping.ratio = 0.2;
                    config.shaping.beta_t = beta_t;
                    config.optim.dynamic_sampling = true;
                    out.push(config);
                }
            }
        }
    }
    out
}

/// Shaped-token ratios {5%, 10%, 20%, 50%} with low-probability positive
/// tokens down-weighted at 0.2x.
fn ratio_ablation() -> Vec<ExperimentConfig> {
    [0.05, 0.10, 0.20, 0.50]
        .into_iter()
        .map(|ratio| {
            let mut config = base(&format!("ratio-{ratio}"));
            config.shaping.mode = ShapingMode::TokenScale;
            config.shaping.target_polarity = TargetPolarity::Positive;
            config.shaping.criterion = SelectionCriterion::Probability;
            config.shaping.side = SelectionSide::Bottom;
            config.shaping.ratio = ratio;
            config.shaping.beta_t = 0.2;
            config.optim.dynamic_sampling = true;
            config
        })
        .collect()
}

/// One-at-a-time sweep around the adaptive-shaping defaults: shaped ratio,
/// initial scale rho, decay coefficient alpha.
fn hyper_grid() -> Vec<ExperimentConfig> {
    let mut out = vec![{
        let mut config = a3po();
        config.run.name = "hyper-base".to_string();
        config
    }];
    for ratio in [0.05, 0.10, 0.50] {
        let mut config = a3po();
        config.run.name = format!("hyper-ratio{ratio}");
        config.shaping.ratio = ratio;
        out.push(config);
    }
    for rho in [1.5, 4.0] {
        let mut config = a3po();
        config.run.name = format!("hyper-rho{}", tag(rho));
        config.shaping.rho_pos = rho;
        config.shaping.rho_neg = rho;
        out.push(config);
    }
    for alpha in [0.001, 0.02] {
        let mut config = a3po();
        config.run.name = format!("hyper-alpha{alpha}");
        config.shaping.alpha_pos = alpha;
        config.shaping.alpha_neg = alpha;
        out.push(config);
    }
    out
}

/// Resolve a preset name to its config family.
pub fn preset(name: &str) -> Result<Vec<ExperimentConfig>, UnknownPreset> {
    match name {
        "psr" => Ok(vec![psr()]),
        "nsr" => Ok(vec![nsr()]),
        "dapo" => Ok(vec![dapo()]),
        "w-reinforce" => Ok(vec![w_reinforce()]),
        "fork-tokens" => Ok(vec![fork_tokens()]),
        "a3po" => Ok(vec![a3po()]),
        "polarity-grid" => Ok(polarity_grid()),
        "token-grid" => Ok(token_grid()),
        "ratio-ablation" => Ok(ratio_ablation()),
        "hyper-grid" => Ok(hyper_grid()),
        other => Err(UnknownPreset(other.to_string())),
    }
}
