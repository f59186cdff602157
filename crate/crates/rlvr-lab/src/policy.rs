//! Tabular autoregressive softmax policy.
//!
//! The policy conditions on the last `order` tokens (BOS-padded) and holds
//! one logit row per encoded context, giving exact probabilities, entropies,
//! and analytic gradients. Every shaping scheme in the lab operates only on
//! the per-token statistics this policy supplies.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Prompt, Rollout, Token, BOS, EOS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("token id {0} out of range for vocabulary of {1}")]
    InvalidToken(u16, usize),
}

/// Context-conditioned logit table.
///
/// Row index encodes the last `order` tokens in base `vocab`; each row holds
/// logits over the full vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    vocab: usize,
    order: usize,
    logits: Vec<f64>,
}

impl PolicyParams {
    /// Zero-initialized table: the uniform policy.
    pub fn zeros(vocab: usize, order: usize) -> PolicyParams {
        assert!(vocab > BOS.0 as usize, "vocabulary must include BOS");
        assert!(order >= 1);
        let rows = vocab.pow(order as u32);
        PolicyParams {
            vocab,
            order,
            logits: vec![0.0; rows * vocab],
        }
    }

    pub fn from_logits(vocab: usize, order: usize, logits: Vec<f64>) -> PolicyParams {
        let rows = vocab.pow(order as u32);
        assert_eq!(logits.len(), rows * vocab, "logit table shape mismatch");
        PolicyParams {
            vocab,
            order,
            logits,
        }
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rows(&self) -> usize {
        self.vocab.pow(self.order as u32)
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    /// Encode the last `order` tokens of `context` (BOS-padded on the left)
    /// as a row index.
    pub fn context_index(&self, context: &[Token]) -> Result<usize, PolicyError> {
        let mut idx = 0usize;
        for pos in 0..self.order {
            let tok = if context.len() + pos >= self.order {
                let t = context[context.len() + pos - self.order];
                if (t.0 as usize) >= self.vocab {
                    return Err(PolicyError::InvalidToken(t.0, self.vocab));
                }
                t
            } else {
                BOS
            };
            idx = idx * self.vocab + tok.0 as usize;
        }
        Ok(idx)
    }

    pub fn logit_row(&self, row: usize) -> &[f64] {
        &self.logits[row * self.vocab..(row + 1) * self.vocab]
    }

    /// Next-token distribution for the given context at the given sampling
    /// temperature (softmax of the context's logit row divided by the
    /// temperature).
    pub fn token_distribution(
        &self,
        context: &[Token],
        temperature: f64,
    ) -> Result<Vec<f64>, PolicyError> {
        let row = self.context_index(context)?;
        Ok(softmax_tempered(self.logit_row(row), temperature))
    }
}

fn softmax_tempered(logits: &[f64], temperature: f64) -> Vec<f64> {
    debug_assert!(temperature > 0.0);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| ((l - max) / temperature).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Shannon entropy of a distribution in nats, with `0 ln 0 = 0`.
pub fn distribution_entropy(dist: &[f64]) -> f64 {
    dist.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Autoregressively sample one response from the policy.
///
/// Records the sampled token's probability, log-probability, and the full
/// distribution entropy at every position, all under the temperature-adjusted
/// distribution. Stops after EOS or `max_len` tokens. The reward is left at 0
/// for the verifier to fill in.
pub fn sample_rollout(
    params: &PolicyParams,
    prompt: &Prompt,
    rng: &mut impl Rng,
    max_len: usize,
    temperature: f64,
) -> Rollout {
    assert!(max_len >= 1);
    let mut seq = prompt.tokens.clone();
    let mut tokens = Vec::new();
    let mut probs = Vec::new();
    let mut logprobs = Vec::new();
    let mut entropies = Vec::new();
    for _ in 0..max_len {
        let dist = params
            .token_distribution(&seq, temperature)
            .expect("prompt and sampled tokens are in-vocabulary");
        let u: f64 = rng.gen();
        let tok = sample_index(&dist, u);
        let p = dist[tok];
        tokens.push(Token(tok as u16));
        probs.push(p);
        logprobs.push(p.ln());
        entropies.push(distribution_entropy(&dist));
        seq.push(Token(tok as u16));
        if Token(tok as u16) == EOS {
            break;
        }
    }
    Rollout {
        prompt_ref: prompt.instance_id,
        tokens,
        probs,
        logprobs,
        entropies,
        reward: 0,
    }
}

fn sample_index(dist: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

/// Exact log-probabilities and entropies of a fixed token sequence under the
/// given parameters and temperature.
///
/// Called with the sampling parameters and temperature this reproduces the
/// rollout's stored statistics.
pub fn recompute_stats(
    params: &PolicyParams,
    prompt_tokens: &[Token],
    response: &[Token],
    temperature: f64,
) -> Result<(Vec<f64>, Vec<f64>), PolicyError> {
    let mut seq: Vec<Token> = prompt_tokens.to_vec();
    let mut logprobs = Vec::with_capacity(response.len());
    let mut entropies = Vec::with_capacity(response.len());
    for &tok in response {
        let dist = params.token_distribution(&seq, temperature)?;
        if (tok.0 as usize) >= params.vocab() {
            return Err(PolicyError::InvalidToken(tok.0, params.vocab()));
        }
        logprobs.push(dist[tok.0 as usize].ln());
        entropies.push(distribution_entropy(&dist));
        seq.push(tok);
    }
    Ok((logprobs, entropies))
}

/// Gradient of `ln pi(token | context)` with respect to the context's logit
/// row: `e_token - softmax(row)`. Zero everywhere else in the table.
pub fn grad_logprob(
    params: &PolicyParams,
    context: &[Token],
    token: Token,
) -> Result<(usize, Vec<f64>), PolicyError> {
    let row = params.context_index(context)?;
    if (token.0 as usize) >= params.vocab() {
        return Err(PolicyError::InvalidToken(token.0, params.vocab()));
    }
    let mut grad = softmax_tempered(params.logit_row(row), 1.0);
    for g in grad.iter_mut() {
        *g = -*g;
    }
    grad[token.0 as usize] += 1.0;
    Ok((row, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};
    use proptest::prelude::*;
    use rand::Rng;

    const V: usize = crate::types::VOCAB_SIZE;

    fn uniform_params() -> PolicyParams {
        PolicyParams::zeros(V, 2)
    }

    fn prompt(tokens: Vec<Token>) -> Prompt {
        Prompt {
            tokens,
            instance_id: 0,
        }
    }

    #[test]
    fn uniform_distribution() {
        let p = uniform_params();
        let dist = p.token_distribution(&[Token(0)], 1.0).unwrap();
        for &x in &dist {
            assert!((x - 1.0 / V as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_softmax() {
        // one logit at ln 2, the other 12 at 0: p = 2/14 vs 1/14
        let mut p = uniform_params();
        let row = p.context_index(&[Token(1), Token(2)]).unwrap();
        p.logits_mut()[row * V] = 2.0f64.ln();
        let dist = p.token_distribution(&[Token(1), Token(2)], 1.0).unwrap();
        assert!((dist[0] - 2.0 / 14.0).abs() < 1e-12);
        for &x in &dist[1..] {
            assert!((x - 1.0 / 14.0).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_closed_forms() {
        assert!((distribution_entropy(&[0.25; 4]) - 4.0f64.ln()).abs() < 1e-12);
        assert_eq!(distribution_entropy(&[1.0, 0.0, 0.0]), 0.0);
        assert!((distribution_entropy(&[0.5, 0.5, 0.0, 0.0]) - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn forced_eos_stops_immediately() {
        let mut p = PolicyParams::zeros(crate::types::VOCAB_SIZE, 2);
        // push EOS logit way up in every context
        let vocab = p.vocab();
        for row in 0..p.rows() {
            p.logits_mut()[row * vocab + EOS.0 as usize] = 50.0;
        }
        let mut rng = stream(1, domain::ROLLOUT, 0, 0);
        let ro = sample_rollout(&p, &prompt(vec![Token(3)]), &mut rng, 10, 1.0);
        assert_eq!(ro.tokens, vec![EOS]);
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = PolicyParams::zeros(crate::types::VOCAB_SIZE, 3);
        let pr = prompt(vec![Token(5), crate::types::SEP]);
        let a = sample_rollout(&p, &pr, &mut stream(9, domain::ROLLOUT, 3, 4), 16, 1.0);
        let b = sample_rollout(&p, &pr, &mut stream(9, domain::ROLLOUT, 3, 4), 16, 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_sampling_probs() {
        let p = uniform_params();
        let mut rng = stream(2, domain::ROLLOUT, 0, 0);
        // keep drawing until we get a rollout that did not stop early
        let ro = sample_rollout(&p, &prompt(vec![Token(0)]), &mut rng, 2, 1.0);
        for &x in &ro.probs {
            assert!((x - 1.0 / V as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn recompute_matches_sampling() {
        let mut p = PolicyParams::zeros(crate::types::VOCAB_SIZE, 3);
        let mut rng = stream(3, domain::ROLLOUT, 1, 1);
        for l in p.logits_mut().iter_mut() {
            *l = rng.gen::<f64>() - 0.5;
        }
        let pr = prompt(vec![Token(7), crate::types::SEP]);
        let ro = sample_rollout(&p, &pr, &mut stream(3, domain::ROLLOUT, 2, 2), 12, 1.0);
        let (lp, ent) = recompute_stats(&p, &pr.tokens, &ro.tokens, 1.0).unwrap();
        for (a, b) in lp.iter().zip(&ro.logprobs) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in ent.iter().zip(&ro.entropies) {
            assert!((a - b).abs() < 1e-9);
        }
        // perturbing a logit the rollout actually visits must change it
        let mut q = p.clone();
        let row = q.context_index(&pr.tokens).unwrap();
        let i = row * q.vocab() + ro.tokens[0].0 as usize;
        q.logits_mut()[i] += 1.0;
        let (lp2, _) = recompute_stats(&q, &pr.tokens, &ro.tokens, 1.0).unwrap();
        assert_ne!(lp, lp2);
    }

    #[test]
    fn uniform_logprob_closed_form() {
        let p = PolicyParams::zeros(crate::types::VOCAB_SIZE, 3);
        let (lp, _) =
            recompute_stats(&p, &[Token(1)], &[Token(2), Token(3)], 1.0).unwrap();
        for &x in &lp {
            assert!((x + (crate::types::VOCAB_SIZE as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_uniform_row() {
        let p = uniform_params();
        let (_, g) = grad_logprob(&p, &[Token(1)], Token(0)).unwrap();
        let u = 1.0 / V as f64;
        assert!((g[0] - (1.0 - u)).abs() < 1e-12);
        for &x in &g[1..] {
            assert!((x + u).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_token_rejected() {
        let p = uniform_params();
        assert!(matches!(
            p.token_distribution(&[Token(99)], 1.0),
            Err(PolicyError::InvalidToken(99, 13))
        ));
        assert!(grad_logprob(&p, &[Token(0)], Token(13)).is_err());
    }

    #[test]
    fn grad_matches_finite_differences() {
        // central differences on the logprob, h = 1e-5, over 100 random triples
        let mut rng = stream(11, domain::ROLLOUT, 0, 0);
        for _ in 0..100 {
            let mut p = PolicyParams::zeros(V, 1);
            for l in p.logits_mut().iter_mut() {
                *l = rng.gen::<f64>() * 4.0 - 2.0;
            }
            let ctx = vec![Token(rng.gen_range(0..V) as u16)];
            let tok = Token(rng.gen_range(0..V) as u16);
            let (row, g) = grad_logprob(&p, &ctx, tok).unwrap();
            let h = 1e-5;
            for v in 0..V {
                let i = row * V + v;
                let mut hi = p.clone();
                hi.logits_mut()[i] += h;
                let mut lo = p.clone();
                lo.logits_mut()[i] -= h;
                let value = |q: &PolicyParams| {
                    q.token_distribution(&ctx, 1.0).unwrap()[tok.0 as usize].ln()
                };
                let fd = (value(&hi) - value(&lo)) / (2.0 * h);
                let denom = fd.abs().max(1e-8);
                assert!(
                    (g[v] - fd).abs() / denom < 1e-4,
                    "grad {} vs fd {}",
                    g[v],
                    fd
                );
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn distribution_sums_to_one(
            logits in proptest::collection::vec(-10.0f64..10.0, 13),
            temp in 0.1f64..3.0,
        ) {
            let dist = softmax_tempered(&logits, temp);
            let sum: f64 = dist.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(dist.iter().all(|&p| p > 0.0));
            // entropy never exceeds ln V
            prop_assert!(distribution_entropy(&dist) <= (13.0f64).ln() + 1e-12);
        }

        #[test]
        fn grad_row_sums_to_zero(logits in proptest::collection::vec(-5.0f64..5.0, 13 * 13), tok in 0u16..13) {
            let p = PolicyParams::from_logits(13, 1, logits);
            let (_, g) = grad_logprob(&p, &[Token(0), Token(1)], Token(tok)).unwrap();
            prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
