//! Synthetic verifiable tasks.
//!
//! Two task families with many-solution structure (redundant solution spaces
//! are what make length and exploration dynamics non-degenerate):
//!
//! - `DigitSum`: given target T, emit digits summing exactly to T.
//! - `ModArith`: given a, b, modulus, emit digits decoding to `(a*b) % modulus`.
//!
//! Responses must be one or more digit tokens followed by EOS; anything else
//! is `MalformedResponse`. Instances are partitioned into train/validation by
//! payload hash parity, so validation prompts are never trained on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::types::{Prompt, Token, EOS, SEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    DigitSum,
    ModArith,
}

/// Payload ranges, configurable from the runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRanges {
    pub digit_sum_min: u32,
    pub digit_sum_max: u32,
    pub operand_max: u32,
    pub moduli: Vec<u32>,
}

impl Default for TaskRanges {
    fn default() -> Self {
        TaskRanges {
            digit_sum_min: 5,
            digit_sum_max: 30,
            operand_max: 99,
            moduli: vec![7, 11, 13],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskInstance {
    DigitSum { target: u32 },
    ModArith { a: u32, b: u32, modulus: u32 },
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

impl TaskInstance {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskInstance::DigitSum { .. } => TaskKind::DigitSum,
            TaskInstance::ModArith { .. } => TaskKind::ModArith,
        }
    }

    /// Stable opaque id derived from the payload.
    pub fn id(&self) -> u64 {
        match *self {
            TaskInstance::DigitSum { target } => splitmix64(1 << 56 | target as u64),
            TaskInstance::ModArith { a, b, modulus } => {
                splitmix64(2 << 56 | (a as u64) << 32 | (b as u64) << 16 | modulus as u64)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictReason {
    Correct,
    WrongAnswer,
    MalformedResponse,
}

/// Binary verifier output. `reward == 1` iff `reason == Correct`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub reward: u8,
    pub reason: VerdictReason,
}

impl Verdict {
    fn correct() -> Verdict {
        Verdict {
            reward: 1,
            reason: VerdictReason::Correct,
        }
    }

    fn wrong() -> Verdict {
        Verdict {
            reward: 0,
            reason: VerdictReason::WrongAnswer,
        }
    }

    fn malformed() -> Verdict {
        Verdict {
            reward: 0,
            reason: VerdictReason::MalformedResponse,
        }
    }
}

/// Uniformly sample an instance payload from the task's declared ranges.
pub fn sample_instance(kind: TaskKind, ranges: &TaskRanges, rng: &mut impl Rng) -> TaskInstance {
    match kind {
        TaskKind::DigitSum => TaskInstance::DigitSum {
            target: rng.gen_range(ranges.digit_sum_min..=ranges.digit_sum_max),
        },
        TaskKind::ModArith => TaskInstance::ModArith {
            a: rng.gen_range(0..=ranges.operand_max),
            b: rng.gen_range(0..=ranges.operand_max),
            modulus: ranges.moduli[rng.gen_range(0..ranges.moduli.len())],
        },
    }
}

/// Enumerate every instance in the declared ranges, in a fixed order.
pub fn enumerate_instances(kind: TaskKind, ranges: &TaskRanges) -> Vec<TaskInstance> {
    match kind {
        TaskKind::DigitSum => (ranges.digit_sum_min..=ranges.digit_sum_max)
            .map(|target| TaskInstance::DigitSum { target })
            .collect(),
        TaskKind::ModArith => {
            let mut out = Vec::new();
            for &modulus in &ranges.moduli {
                for a in 0..=ranges.operand_max {
                    for b in 0..=ranges.operand_max {
                        out.push(TaskInstance::ModArith { a, b, modulus });
                    }
                }
            }
            out
        }
    }
}

fn push_digits(tokens: &mut Vec<Token>, value: u32) {
    let mut digits = Vec::new();
    let mut v = value;
    loop {
        digits.push(Token::digit(v % 10));
        v /= 10;
        if v == 0 {
            break;
        }
    }
    digits.reverse();
    tokens.extend(digits);
}

/// Deterministic token encoding of an instance: digits of each payload value
/// separated and terminated by SEP. Prompts never contain EOS.
pub fn make_prompt(instance: &TaskInstance) -> Prompt {
    let mut tokens = Vec::new();
    match *instance {
        TaskInstance::DigitSum { target } => {
            push_digits(&mut tokens, target);
            tokens.push(SEP);
        }
        TaskInstance::ModArith { a, b, modulus } => {
            push_digits(&mut tokens, a);
            tokens.push(SEP);
            push_digits(&mut tokens, b);
            tokens.push(SEP);
            push_digits(&mut tokens, modulus);
            tokens.push(SEP);
        }
    }
    Prompt {
        tokens,
        instance_id: instance.id(),
    }
}

/// Inverse of [`make_prompt`]; `None` if the tokens are not a valid encoding.
pub fn decode_prompt(prompt: &Prompt) -> Option<TaskInstance> {
    let mut fields: Vec<u32> = Vec::new();
    let mut current: Option<u32> = None;
    for &tok in &prompt.tokens {
        if tok == SEP {
            fields.push(current.take()?);
        } else {
            let d = tok.as_digit()?;
            current = Some(current.unwrap_or(0) * 10 + d);
        }
    }
    if current.is_some() {
        return None; // trailing digits without SEP terminator
    }
    match fields.as_slice() {
        [target] => Some(TaskInstance::DigitSum { target: *target }),
        [a, b, modulus] => Some(TaskInstance::ModArith {
            a: *a,
            b: *b,
            modulus: *modulus,
        }),
        _ => None,
    }
}

/// Parse a response as digits followed by a final EOS. `None` when the
/// grammar is violated.
fn parse_digits(response: &[Token]) -> Option<Vec<u32>> {
    let (&last, body) = response.split_last()?;
    if last != EOS || body.is_empty() {
        return None;
    }
    body.iter().map(|t| t.as_digit()).collect()
}

/// Score a response. Total: every token sequence receives a verdict.
pub fn verify(instance: &TaskInstance, response: &[Token]) -> Verdict {
    let digits = match parse_digits(response) {
        Some(d) => d,
        None => return Verdict::malformed(),
    };
    match *instance {
        TaskInstance::DigitSum { target } => {
            if digits.iter().sum::<u32>() == target {
                Verdict::correct()
            } else {
                Verdict::wrong()
            }
        }
        TaskInstance::ModArith { a, b, modulus } => {
            // decimal decode, leading zeros allowed; cap to avoid overflow
            let mut value: u64 = 0;
            for &d in &digits {
                value = (value * 10 + d as u64).min(1 << 40);
            }
            if value == ((a as u64 * b as u64) % modulus as u64) {
                Verdict::correct()
            } else {
                Verdict::wrong()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

/// Train/validation partition by payload hash parity.
pub fn split_of(instance: &TaskInstance) -> Split {
    if instance.id() % 2 == 0 {
        Split::Train
    } else {
        Split::Validation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let ranges = TaskRanges::default();
        let a = sample_instance(TaskKind::DigitSum, &ranges, &mut stream(5, domain::TASK, 0, 0));
        let b = sample_instance(TaskKind::DigitSum, &ranges, &mut stream(5, domain::TASK, 0, 0));
        assert_eq!(a, b);
        let mut rng = stream(5, domain::TASK, 1, 0);
        for _ in 0..10_000 {
            match sample_instance(TaskKind::DigitSum, &ranges, &mut rng) {
                TaskInstance::DigitSum { target } => assert!((5..=30).contains(&target)),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn digit_sum_targets_roughly_uniform() {
        // chi-square sanity against the uniform oracle over 26 targets
        let ranges = TaskRanges::default();
        let mut rng = stream(6, domain::TASK, 0, 0);
        let n = 26_000usize;
        let mut counts = [0f64; 26];
        for _ in 0..n {
            if let TaskInstance::DigitSum { target } =
                sample_instance(TaskKind::DigitSum, &ranges, &mut rng)
            {
                counts[(target - 5) as usize] += 1.0;
            }
        }
        let expected = n as f64 / 26.0;
        let chi2: f64 = counts.iter().map(|&c| (c - expected).powi(2) / expected).sum();
        // 25 dof, p=0.001 critical value ~52.6
        assert!(chi2 < 52.6, "chi2 = {chi2}");
    }

    #[test]
    fn prompt_encoding() {
        let p = make_prompt(&TaskInstance::DigitSum { target: 7 });
        assert_eq!(p.tokens, vec![Token(7), SEP]);
        let p = make_prompt(&TaskInstance::DigitSum { target: 12 });
        assert_eq!(p.tokens, vec![Token(1), Token(2), SEP]);
        assert!(!p.tokens.contains(&EOS));
    }

    #[test]
    fn prompt_round_trip() {
        let ranges = TaskRanges::default();
        for kind in [TaskKind::DigitSum, TaskKind::ModArith] {
            for inst in enumerate_instances(kind, &ranges) {
                assert_eq!(decode_prompt(&make_prompt(&inst)), Some(inst));
            }
        }
    }

    #[test]
    fn verifier_examples() {
        let t7 = TaskInstance::DigitSum { target: 7 };
        assert_eq!(verify(&t7, &[Token(3), Token(4), EOS]).reward, 1);
        let v = verify(&t7, &[Token(3), Token(3), EOS]);
        assert_eq!((v.reward, v.reason), (0, VerdictReason::WrongAnswer));
        let v = verify(&t7, &[Token(3), SEP, Token(4), EOS]);
        assert_eq!((v.reward, v.reason), (0, VerdictReason::MalformedResponse));
        assert_eq!(verify(&t7, &[EOS]).reason, VerdictReason::MalformedResponse);
        assert_eq!(verify(&t7, &[]).reason, VerdictReason::MalformedResponse);
        assert_eq!(verify(&t7, &[Token(7)]).reason, VerdictReason::MalformedResponse);
    }

    #[test]
    fn mod_arith_verifier() {
        let inst = TaskInstance::ModArith { a: 12, b: 5, modulus: 7 };
        // 60 mod 7 = 4
        assert_eq!(verify(&inst, &[Token(4), EOS]).reward, 1);
        assert_eq!(verify(&inst, &[Token(0), Token(4), EOS]).reward, 1);
        assert_eq!(verify(&inst, &[Token(5), EOS]).reward, 0);
    }

    /// Brute-force enumeration of correct DigitSum responses up to a length.
    fn correct_responses(target: u32, max_digits: usize) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let mut stack: Vec<Vec<u32>> = vec![vec![]];
        while let Some(prefix) = stack.pop() {
            let sum: u32 = prefix.iter().sum();
            if !prefix.is_empty() && sum == target {
                out.push(prefix.clone());
            }
            if prefix.len() < max_digits {
                for d in 0..10u32 {
                    if sum + d <= target {
                        let mut next = prefix.clone();
                        next.push(d);
                        stack.push(next);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn digit_sum_has_redundant_solutions() {
        for target in 5..=30u32 {
            let sols = correct_responses(target, 5);
            assert!(sols.len() >= 2, "target {target} has {} solutions", sols.len());
        }
    }

    #[test]
    fn digit_sum_has_solutions_of_different_lengths() {
        for target in 10..=30u32 {
            let sols = correct_responses(target, 6);
            let mut lens: Vec<usize> = sols.iter().map(|s| s.len()).collect();
            lens.sort_unstable();
            lens.dedup();
            assert!(lens.len() >= 2, "target {target} only has lengths {lens:?}");
        }
    }

    #[test]
    fn split_partitions_and_is_stable() {
        let ranges = TaskRanges::default();
        let insts = enumerate_instances(TaskKind::DigitSum, &ranges);
        let train = insts.iter().filter(|i| split_of(i) == Split::Train).count();
        let val = insts.len() - train;
        assert!(train >= 5 && val >= 5, "split too lopsided: {train}/{val}");
        for i in &insts {
            assert_eq!(split_of(i), split_of(i));
        }
    }
}
