//! Advantage transformations.
//!
//! Everything between group-relative advantage computation and the clipped
//! surrogate: single-polarity masking, polarity-level scaling, token-level
//! selection and scaling, and the adaptive asymmetric scheme that boosts
//! low-probability positive tokens and high-probability negative tokens
//! with a step-decayed multiplier `max(rho - alpha * s, 1)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{polarity_of, Group, Polarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingMode {
    None,
    Psr,
    Nsr,
    PolarityScale,
    TokenScale,
    A3po,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    Entropy,
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionSide {
    Top,
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionScope {
    Rollout,
    Batch,
}

/// Which rollouts token selection applies to. `Both` exists for the
/// fork-token baseline, which masks low-entropy tokens regardless of
/// polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPolarity {
    Positive,
    Negative,
    Both,
}

impl TargetPolarity {
    fn matches(self, polarity: Polarity) -> bool {
        match self {
            TargetPolarity::Positive => polarity == Polarity::Positive,
            TargetPolarity::Negative => polarity == Polarity::Negative,
            TargetPolarity::Both => true,
        }
    }
}

/// Which shaping scheme to apply and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapingConfig {
    pub mode: ShapingMode,
    pub beta_p: f64,
    pub beta_n: f64,
    pub beta_t: f64,
    pub criterion: SelectionCriterion,
    pub side: SelectionSide,
    pub target_polarity: TargetPolarity,
    pub ratio: f64,
    pub scope: SelectionScope,
    pub rho_pos: f64,
    pub rho_neg: f64,
    pub alpha_pos: f64,
    pub alpha_neg: f64,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        ShapingConfig {
            mode: ShapingMode::None,
            beta_p: 1.0,
            beta_n: 1.0,
            beta_t: 1.0,
            criterion: SelectionCriterion::Probability,
            side: SelectionSide::Bottom,
            target_polarity: TargetPolarity::Positive,
            ratio: 0.2,
            scope: SelectionScope::Rollout,
            rho_pos: 2.0,
            rho_neg: 2.0,
            alpha_pos: 0.005,
            alpha_neg: 0.005,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapingError {
    #[error("no rollout matches the target polarity")]
    EmptySelection,
    #[error("rollout has no tokens")]
    EmptyRollout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    Psr,
    Nsr,
}

/// Keep only one polarity's advantages: PSR zeroes tokens with advantage
/// <= 0, NSR zeroes tokens with advantage >= 0. The two masks sum back to
/// the unmasked advantages.
pub fn psr_nsr_mask(advantages: &[f64], mode: MaskMode) -> Vec<f64> {
    advantages
        .iter()
        .map(|&a| match mode {
            MaskMode::Psr if a > 0.0 => a,
            MaskMode::Nsr if a < 0.0 => a,
            _ => 0.0,
        })
        .collect()
}

/// Scale positive advantages by `beta_p` and negative ones by `beta_n`.
pub fn polarity_scale(advantages: &[f64], beta_p: f64, beta_n: f64) -> Vec<f64> {
    advantages
        .iter()
        .map(|&a| {
            if a > 0.0 {
                a * beta_p
            } else if a < 0.0 {
                a * beta_n
            } else {
                a
            }
        })
        .collect()
}

/// Per-rollout statistics consumed by token selection.
pub struct RolloutView<'a> {
    pub polarity: Polarity,
    pub probs: &'a [f64],
    pub entropies: &'a [f64],
}

impl<'a> RolloutView<'a> {
    pub fn of(rollout: &'a crate::types::Rollout) -> RolloutView<'a> {
        RolloutView {
            polarity: polarity_of(rollout),
            probs: &rollout.probs,
            entropies: &rollout.entropies,
        }
    }

    fn criterion_value(&self, criterion: SelectionCriterion, t: usize) -> f64 {
        match criterion {
            SelectionCriterion::Entropy => self.entropies[t],
            SelectionCriterion::Probability => self.probs[t],
        }
    }
}

/// Mark tokens of target-polarity rollouts by criterion value.
///
/// Batch scope marks the `ceil(ratio * N)` most extreme tokens across all
/// qualifying rollouts; Rollout scope marks `ceil(ratio * L)` per rollout.
/// Ties at the cut value go to the lower (rollout, token) index.
pub fn select_tokens(
    rollouts: &[RolloutView],
    criterion: SelectionCriterion,
    side: SelectionSide,
    ratio: f64,
    scope: SelectionScope,
    target: TargetPolarity,
) -> Result<Vec<Vec<bool>>, ShapingError> {
    debug_assert!(ratio > 0.0 && ratio <= 1.0);
    if !rollouts.iter().any(|r| target.matches(r.polarity)) {
        return Err(ShapingError::EmptySelection);
    }
    let mut masks: Vec<Vec<bool>> = rollouts.iter().map(|r| vec![false; r.probs.len()]).collect();

    let pick = |candidates: &mut Vec<(f64, usize, usize)>, count: usize, masks: &mut Vec<Vec<bool>>| {
        match side {
            SelectionSide::Top => candidates.sort_by(|a, b| {
                b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
            }),
            SelectionSide::Bottom => candidates.sort_by(|a, b| {
                a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
            }),
        }
        for &(_, ri, ti) in candidates.iter().take(count) {
            masks[ri][ti] = true;
        }
    };

    match scope {
        SelectionScope::Batch => {
            let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
            for (ri, r) in rollouts.iter().enumerate() {
                if !target.matches(r.polarity) {
                    continue;
                }
                for t in 0..r.probs.len() {
                    candidates.push((r.criterion_value(criterion, t), ri, t));
                }
            }
            let count = (ratio * candidates.len() as f64).ceil() as usize;
            pick(&mut candidates, count, &mut masks);
        }
        SelectionScope::Rollout => {
            for (ri, r) in rollouts.iter().enumerate() {
                if !target.matches(r.polarity) || r.probs.is_empty() {
                    continue;
                }
                let mut candidates: Vec<(f64, usize, usize)> = (0..r.probs.len())
                    .map(|t| (r.criterion_value(criterion, t), ri, t))
                    .collect();
                let count = (ratio * candidates.len() as f64).ceil() as usize;
                pick(&mut candidates, count, &mut masks);
            }
        }
    }
    Ok(masks)
}

/// Multiply masked tokens' advantages by `beta_t`; `beta_t = 0` reproduces
/// gradient masking.
pub fn token_scale(advantages: &[f64], mask: &[bool], beta_t: f64) -> Vec<f64> {
    debug_assert_eq!(advantages.len(), mask.len());
    advantages
        .iter()
        .zip(mask)
        .map(|(&a, &m)| if m { a * beta_t } else { a })
        .collect()
}

/// Nearest-rank quantile thresholds over one rollout's sampling-time probs.
///
/// `tau_pos` is the value such that the lowest `ceil(ratio * L)` tokens have
/// `p <= tau_pos`; `tau_neg` bounds the highest `ceil(ratio * L)` tokens from
/// below.
pub fn rollout_thresholds(probs: &[f64], ratio: f64) -> Result<(f64, f64), ShapingError> {
    if probs.is_empty() {
        return Err(ShapingError::EmptyRollout);
    }
    debug_assert!(ratio > 0.0 && ratio <= 1.0);
    let mut sorted: Vec<f64> = probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let len = sorted.len();
    let k = ((ratio * len as f64).ceil() as usize).clamp(1, len);
    let tau_pos = sorted[k - 1];
    let tau_neg = sorted[len - k];
    Ok((tau_pos, tau_neg))
}

/// Adaptive asymmetric shaping of one token's advantage.
///
/// Boosts low-probability positive tokens and high-probability negative
/// tokens by `max(rho - alpha * s, 1)`; everything else passes through
/// unchanged. At and beyond the decay horizon `(rho - 1) / alpha` this is
/// the identity.
#[allow(clippy::too_many_arguments)]
pub fn a3po_shape(
    advantage: f64,
    prob: f64,
    step: u64,
    tau_pos: f64,
    tau_neg: f64,
    rho_pos: f64,
    rho_neg: f64,
    alpha_pos: f64,
    alpha_neg: f64,
) -> f64 {
    let s = step as f64;
    if advantage > 0.0 && prob <= tau_pos {
        advantage * (rho_pos - alpha_pos * s).max(1.0)
    } else if advantage < 0.0 && prob >= tau_neg {
        advantage * (rho_neg - alpha_neg * s).max(1.0)
    } else {
        advantage
    }
}

/// Result of shaping one batch: per-rollout token advantages (group-major
/// flatten order) and the fraction of tokens whose advantage changed.
pub struct ShapedBatch {
    pub advantages: Vec<Vec<f64>>,
    pub shaped_token_fraction: f64,
}

/// Broadcast group advantages to tokens and apply the configured scheme.
///
/// Token selection that finds no qualifying rollout leaves the batch
/// unshaped (the scheme only skips, it never fails training).
pub fn shape_batch(config: &ShapingConfig, groups: &[Group], step: u64) -> ShapedBatch {
    let mut broadcast: Vec<Vec<f64>> = Vec::new();
    let mut views: Vec<RolloutView> = Vec::new();
    for group in groups {
        for (rollout, &adv) in group.rollouts.iter().zip(&group.advantages) {
            broadcast.push(vec![adv; rollout.len()]);
            views.push(RolloutView::of(rollout));
        }
    }

    let shaped: Vec<Vec<f64>> = match config.mode {
        ShapingMode::None => broadcast.clone(),
        ShapingMode::Psr => broadcast.iter().map(|a| psr_nsr_mask(a, MaskMode::Psr)).collect(),
        ShapingMode::Nsr => broadcast.iter().map(|a| psr_nsr_mask(a, MaskMode::Nsr)).collect(),
        ShapingMode::PolarityScale => broadcast
            .iter()
            .map(|a| polarity_scale(a, config.beta_p, config.beta_n))
            .collect(),
        ShapingMode::TokenScale => match select_tokens(
            &views,
            config.criterion,
            config.side,
            config.ratio,
            config.scope,
            config.target_polarity,
        ) {
            Ok(masks) => broadcast
                .iter()
                .zip(&masks)
                .map(|(a, m)| token_scale(a, m, config.beta_t))
                .collect(),
            Err(ShapingError::EmptySelection) => broadcast.clone(),
            Err(e) => unreachable!("unexpected selection failure: {e}"),
        },
        ShapingMode::A3po => broadcast
            .iter()
            .zip(&views)
            .map(|(adv, view)| {
                if adv.is_empty() {
                    return adv.clone();
                }
                let (tau_pos, tau_neg) =
                    rollout_thresholds(view.probs, config.ratio).expect("non-empty rollout");
                adv.iter()
                    .zip(view.probs)
                    .map(|(&a, &p)| {
                        a3po_shape(
                            a,
                            p,
                            step,
                            tau_pos,
                            tau_neg,
                            config.rho_pos,
                            config.rho_neg,
                            config.alpha_pos,
                            config.alpha_neg,
                        )
                    })
                    .collect()
            })
            .collect(),
    };

    let total: usize = broadcast.iter().map(Vec::len).sum();
    let changed: usize = broadcast
        .iter()
        .zip(&shaped)
        .map(|(a, b)| a.iter().zip(b).filter(|(x, y)| x != y).count())
        .sum();
    let shaped_token_fraction = if total == 0 {
        0.0
    } else {
        changed as f64 / total as f64
    };
    ShapedBatch {
        advantages: shaped,
        shaped_token_fraction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn psr_nsr_definitions() {
        assert_eq!(psr_nsr_mask(&[1.0], MaskMode::Psr), vec![1.0]);
        assert_eq!(psr_nsr_mask(&[1.0], MaskMode::Nsr), vec![0.0]);
        assert_eq!(psr_nsr_mask(&[-1.0], MaskMode::Nsr), vec![-1.0]);
        assert_eq!(psr_nsr_mask(&[-1.0], MaskMode::Psr), vec![0.0]);
    }

    #[test]
    fn polarity_scale_examples() {
        assert_eq!(polarity_scale(&[1.0], 5.0, 1.0), vec![5.0]);
        assert_eq!(polarity_scale(&[-1.0], 1.0, 5.0), vec![-5.0]);
        assert_eq!(polarity_scale(&[-1.0], 1.0, 0.5), vec![-0.5]);
        let adv = [1.0, -0.5, 0.0, 2.0];
        assert_eq!(polarity_scale(&adv, 1.0, 1.0), adv.to_vec());
    }

    fn single_view(polarity: Polarity, probs: &[f64], entropies: &[f64]) -> Vec<Vec<bool>> {
        let views = [RolloutView {
            polarity,
            probs,
            entropies,
        }];
        select_tokens(
            &views,
            SelectionCriterion::Probability,
            SelectionSide::Bottom,
            0.2,
            SelectionScope::Rollout,
            TargetPolarity::Positive,
        )
        .unwrap()
    }

    #[test]
    fn select_bottom_fifth_by_probability() {
        let probs: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let ent = vec![0.0; 10];
        let masks = single_view(Polarity::Positive, &probs, &ent);
        let marked: Vec<usize> = masks[0]
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(marked, vec![0, 1]); // probs 0.1 and 0.2
    }

    #[test]
    fn select_full_ratio_marks_all_of_target() {
        let probs = vec![0.3, 0.5, 0.9];
        let views = [
            RolloutView {
                polarity: Polarity::Positive,
                probs: &probs,
                entropies: &probs,
            },
            RolloutView {
                polarity: Polarity::Negative,
                probs: &probs,
                entropies: &probs,
            },
        ];
        let masks = select_tokens(
            &views,
            SelectionCriterion::Entropy,
            SelectionSide::Top,
            1.0,
            SelectionScope::Batch,
            TargetPolarity::Positive,
        )
        .unwrap();
        assert!(masks[0].iter().all(|&m| m));
        assert!(masks[1].iter().all(|&m| !m));
    }

    #[test]
    fn select_tie_break_lower_index_wins() {
        let probs = vec![0.5, 0.5, 0.5, 0.5];
        let views = [RolloutView {
            polarity: Polarity::Positive,
            probs: &probs,
            entropies: &probs,
        }];
        let masks = select_tokens(
            &views,
            SelectionCriterion::Probability,
            SelectionSide::Bottom,
            0.5,
            SelectionScope::Rollout,
            TargetPolarity::Positive,
        )
        .unwrap();
        assert_eq!(masks[0], vec![true, true, false, false]);
    }

    #[test]
    fn select_no_target_polarity_errors() {
        let probs = vec![0.5];
        let views = [RolloutView {
            polarity: Polarity::Negative,
            probs: &probs,
            entropies: &probs,
        }];
        let err = select_tokens(
            &views,
            SelectionCriterion::Probability,
            SelectionSide::Bottom,
            0.2,
            SelectionScope::Batch,
            TargetPolarity::Positive,
        );
        assert_eq!(err.unwrap_err(), ShapingError::EmptySelection);
    }

    #[test]
    fn token_scale_examples() {
        let adv = [1.0, -1.0, 0.5];
        let mask = [false, true, false];
        assert_eq!(token_scale(&adv, &mask, 1.0), adv.to_vec());
        assert_eq!(token_scale(&adv, &mask, 5.0), vec![1.0, -5.0, 0.5]);
        assert_eq!(token_scale(&adv, &[true, true, true], 0.0), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn thresholds_nearest_rank() {
        let probs: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let (tau_pos, tau_neg) = rollout_thresholds(&probs, 0.2).unwrap();
        assert_eq!(tau_pos, 0.2);
        assert_eq!(tau_neg, 0.9);
    }

    #[test]
    fn thresholds_degenerate_cases() {
        let (tp, tn) = rollout_thresholds(&[0.7], 0.2).unwrap();
        assert_eq!((tp, tn), (0.7, 0.7));
        let (tp, tn) = rollout_thresholds(&[0.4, 0.4, 0.4], 0.2).unwrap();
        assert_eq!((tp, tn), (0.4, 0.4));
        assert_eq!(rollout_thresholds(&[], 0.2), Err(ShapingError::EmptyRollout));
    }

    #[test]
    fn a3po_hand_cases() {
        // negative high-probability token at step 0
        let shaped = a3po_shape(-1.0, 0.95, 0, 0.2, 0.9, 2.0, 2.0, 0.005, 0.005);
        assert_eq!(shaped, -2.0);
        // positive token above tau_pos passes through
        let shaped = a3po_shape(0.5, 0.8, 0, 0.2, 0.9, 2.0, 2.0, 0.005, 0.005);
        assert_eq!(shaped, 0.5);
        // beyond the decay horizon (rho-1)/alpha = 200 shaping is inactive
        let shaped = a3po_shape(-1.0, 0.95, 200, 0.2, 0.9, 2.0, 2.0, 0.005, 0.005);
        assert_eq!(shaped, -1.0);
    }

    proptest! {
        #[test]
        fn psr_plus_nsr_is_identity(adv in proptest::collection::vec(-3.0f64..3.0, 1..40)) {
            let psr = psr_nsr_mask(&adv, MaskMode::Psr);
            let nsr = psr_nsr_mask(&adv, MaskMode::Nsr);
            for ((p, n), a) in psr.iter().zip(&nsr).zip(&adv) {
                prop_assert_eq!(p + n, *a);
            }
        }

        #[test]
        fn shaping_never_flips_sign(
            a in -3.0f64..3.0,
            p in 0.001f64..1.0,
            s in 0u64..500,
            rho in 1.0f64..4.0,
            alpha in 0.0f64..0.05,
        ) {
            let shaped = a3po_shape(a, p, s, 0.3, 0.7, rho, rho, alpha, alpha);
            prop_assert!(shaped.signum() == a.signum() || a == 0.0);
            // multiplier >= 1 so magnitude never shrinks
            prop_assert!(shaped.abs() >= a.abs() - 1e-15);
        }

        #[test]
        fn a3po_reduces_to_identity(
            a in -3.0f64..3.0,
            p in 0.001f64..1.0,
            s in 0u64..500,
        ) {
            // rho = 1 is the plain objective for any step
            let shaped = a3po_shape(a, p, s, 0.5, 0.5, 1.0, 1.0, 0.005, 0.005);
            prop_assert_eq!(shaped, a);
            // so is any step past the decay horizon
            let shaped = a3po_shape(a, p, s + 200, 0.5, 0.5, 2.0, 2.0, 0.005, 0.005);
            prop_assert_eq!(shaped, a);
        }

        #[test]
        fn a3po_decay_is_monotone(
            p in 0.7f64..1.0,
            s in 0u64..300,
        ) {
            let at = |step| a3po_shape(-1.0, p, step, 0.2, 0.7, 2.0, 2.0, 0.005, 0.005).abs();
            prop_assert!(at(s + 1) <= at(s));
            prop_assert!(at(s) >= 1.0);
        }

        #[test]
        fn selection_cardinality(
            lens in proptest::collection::vec(1usize..20, 1..8),
            ratio in 0.05f64..1.0,
        ) {
            let data: Vec<Vec<f64>> = lens
                .iter()
                .enumerate()
                .map(|(i, &l)| (0..l).map(|t| ((i * 31 + t * 7) % 97) as f64 / 97.0).collect())
                .collect();
            let views: Vec<RolloutView> = data
                .iter()
                .map(|probs| RolloutView {
                    polarity: Polarity::Positive,
                    probs,
                    entropies: probs,
                })
                .collect();
            let per_rollout = select_tokens(
                &views,
                SelectionCriterion::Probability,
                SelectionSide::Bottom,
                ratio,
                SelectionScope::Rollout,
                TargetPolarity::Positive,
            ).unwrap();
            for (mask, &l) in per_rollout.iter().zip(&lens) {
                let k = (ratio * l as f64).ceil() as usize;
                prop_assert_eq!(mask.iter().filter(|&&m| m).count(), k);
            }
            let batch = select_tokens(
                &views,
                SelectionCriterion::Probability,
                SelectionSide::Top,
                ratio,
                SelectionScope::Batch,
                TargetPolarity::Positive,
            ).unwrap();
            let n: usize = lens.iter().sum();
            let k = (ratio * n as f64).ceil() as usize;
            prop_assert_eq!(batch.iter().flatten().filter(|&&m| m).count(), k);
        }

        #[test]
        fn polarity_scale_relative_ratio(
            adv in proptest::collection::vec(-3.0f64..3.0, 1..30),
            beta_p in 0.125f64..4.0,
            beta_n in 0.125f64..4.0,
        ) {
            // (beta_p, beta_n) and (2 beta_p, 2 beta_n) give exact scalar doubles
            let base = polarity_scale(&adv, beta_p, beta_n);
            let doubled = polarity_scale(&adv, 2.0 * beta_p, 2.0 * beta_n);
            for (b, d) in base.iter().zip(&doubled) {
                prop_assert_eq!(2.0 * b, *d);
            }
        }
    }
}
