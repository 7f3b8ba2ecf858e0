//! Information-based sequence scores over the decoded output's token
//! distributions.
//!
//! Each scorer has a `*_steps` form taking `(output index, step)` pairs so
//! the claim-level adaptations in [`crate::claim`] run the exact same code on
//! a subset of positions.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{acos, exp, log, log_sum_exp, sqrt};
use crate::record::{GenerationRecord, TokenStep};
use crate::similarity::TextSimilarity;

/// Tunable constants of CPMI and Rényi divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoParams {
    pub cpmi_lambda: f64,
    /// Entropy threshold in nats.
    pub cpmi_tau: f64,
    pub renyi_alpha: f64,
}

impl Default for InfoParams {
    fn default() -> Self {
        Self { cpmi_lambda: 1.0, cpmi_tau: 2.0, renyi_alpha: 0.5 }
    }
}

impl InfoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cpmi_lambda.is_finite() && self.cpmi_lambda >= 0.0) {
            return Err(Error::InvalidParameter("cpmi_lambda must be finite and >= 0".into()));
        }
        if self.cpmi_tau.is_nan() || self.cpmi_tau < 0.0 {
            return Err(Error::InvalidParameter("cpmi_tau must be >= 0".into()));
        }
        let a = self.renyi_alpha;
        if !(a.is_finite() && a > 0.0) || (a - 1.0).abs() < 1e-9 {
            return Err(Error::InvalidParameter("renyi_alpha must be > 0 and != 1".into()));
        }
        Ok(())
    }
}

/// Whether token entropies are averaged or maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyMode {
    Mean,
    Max,
}

pub(crate) fn indexed(record: &GenerationRecord) -> impl Iterator<Item = (usize, &TokenStep)> + Clone {
    record.output.iter().enumerate()
}

fn non_empty<'a, I>(steps: I) -> Result<Vec<(usize, &'a TokenStep)>>
where
    I: IntoIterator<Item = (usize, &'a TokenStep)>,
{
    let steps: Vec<_> = steps.into_iter().collect();
    if steps.is_empty() {
        return Err(Error::EmptyOutput);
    }
    Ok(steps)
}

/// Entropy in nats of one step's truncated distribution (tail counted once).
pub fn step_entropy(position: usize, step: &TokenStep) -> Result<f64> {
    if !step.has_distribution() {
        return Err(Error::MissingAlternatives { position });
    }
    Ok(crate::math::entropy_from_logprobs(step.outcome_logprobs()))
}

/// `1 - P(y | x)`.
pub fn msp(record: &GenerationRecord) -> Result<f64> {
    msp_steps(indexed(record))
}

pub fn msp_steps<'a>(steps: impl IntoIterator<Item = (usize, &'a TokenStep)>) -> Result<f64> {
    let steps = non_empty(steps)?;
    let logprob: f64 = steps.iter().map(|(_, s)| s.logprob).sum();
    Ok(1.0 - exp(logprob))
}

/// `exp(-(1/L) log P(y | x))`.
pub fn perplexity(record: &GenerationRecord) -> Result<f64> {
    perplexity_steps(indexed(record))
}

pub fn perplexity_steps<'a>(steps: impl IntoIterator<Item = (usize, &'a TokenStep)>) -> Result<f64> {
    let steps = non_empty(steps)?;
    let logprob: f64 = steps.iter().map(|(_, s)| s.logprob).sum();
    Ok(exp(-logprob / steps.len() as f64))
}

/// Mean or maximum per-token entropy.
pub fn token_entropy(record: &GenerationRecord, mode: EntropyMode) -> Result<f64> {
    token_entropy_steps(indexed(record), mode)
}

pub fn token_entropy_steps<'a>(
    steps: impl IntoIterator<Item = (usize, &'a TokenStep)>,
    mode: EntropyMode,
) -> Result<f64> {
    let steps = non_empty(steps)?;
    let entropies = steps.iter().map(|(i, s)| step_entropy(*i, s)).collect::<Result<Vec<_>>>()?;
    Ok(match mode {
        EntropyMode::Mean => entropies.iter().sum::<f64>() / entropies.len() as f64,
        EntropyMode::Max => entropies.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

fn uncond(position: usize, step: &TokenStep) -> Result<f64> {
    step.uncond_logprob.ok_or(Error::MissingUnconditional { position })
}

/// `(1/L) Σ log P(y_l | y_<l) / P(y_l | y_<l, x)`.
pub fn pmi(record: &GenerationRecord) -> Result<f64> {
    pmi_steps(indexed(record))
}

pub fn pmi_steps<'a>(steps: impl IntoIterator<Item = (usize, &'a TokenStep)>) -> Result<f64> {
    let steps = non_empty(steps)?;
    let mut total = 0.0;
    for (i, s) in &steps {
        total += uncond(*i, s)? - s.logprob;
    }
    Ok(total / steps.len() as f64)
}

/// Conditional PMI:
/// `-(1/L) Σ log P(y_l | y_<l, x) + (λ/L) Σ_{l: H_l ≥ τ} log P(y_l | y_<l)`.
///
/// The unconditional term enters with a plus sign, so a confident prompt
/// (large conditional probability relative to the unconditional one) lowers
/// the score. With `τ = +∞` no entropy is needed and the score reduces to the
/// mean negative log-likelihood.
pub fn cpmi(record: &GenerationRecord, params: &InfoParams) -> Result<f64> {
    params.validate()?;
    let steps = non_empty(indexed(record))?;
    let len = steps.len() as f64;
    let nll: f64 = -steps.iter().map(|(_, s)| s.logprob).sum::<f64>() / len;
    if params.cpmi_tau == f64::INFINITY {
        return Ok(nll);
    }
    let mut correction = 0.0;
    for (i, s) in &steps {
        if step_entropy(*i, s)? >= params.cpmi_tau {
            correction += uncond(*i, s)?;
        }
    }
    Ok(nll + params.cpmi_lambda * correction / len)
}

/// Mean over steps of the Rényi divergence of order α between the token
/// distribution and the uniform distribution over the same outcomes.
pub fn renyi_divergence(record: &GenerationRecord, params: &InfoParams) -> Result<f64> {
    params.validate()?;
    let alpha = params.renyi_alpha;
    let steps = non_empty(indexed(record))?;
    let mut total = 0.0;
    for (i, s) in &steps {
        if !s.has_distribution() {
            return Err(Error::MissingAlternatives { position: *i });
        }
        let n = s.outcome_count() as f64;
        // log Σ p^α / q^(α-1) with q = 1/N
        let log_sum = log_sum_exp(s.outcome_logprobs().map(|lp| alpha * lp)) + (alpha - 1.0) * log(n);
        total += log_sum / (alpha - 1.0);
    }
    Ok(total / steps.len() as f64)
}

/// Mean over steps of `(2/π) arccos Σ sqrt(p_i q_i)` with uniform `q`.
pub fn fisher_rao(record: &GenerationRecord) -> Result<f64> {
    let steps = non_empty(indexed(record))?;
    let mut total = 0.0;
    for (i, s) in &steps {
        if !s.has_distribution() {
            return Err(Error::MissingAlternatives { position: *i });
        }
        let q = 1.0 / s.outcome_count() as f64;
        let bc: f64 = s.outcome_logprobs().map(|lp| sqrt(exp(lp) * q)).sum();
        total += 2.0 / PI * acos(bc.clamp(-1.0, 1.0));
    }
    Ok(total / steps.len() as f64)
}

fn with_prompt(prompt: &str, tokens: &str) -> String {
    let prompt = prompt.trim();
    if prompt.is_empty() {
        return String::from(tokens);
    }
    let mut s = String::from(prompt);
    if !tokens.is_empty() {
        s.push(' ');
        s.push_str(tokens);
    }
    s
}

/// Normalized relevance weights `R̃_T(y_l)` with
/// `R_T(y_l) = 1 - g(x ∪ y, x ∪ y \ y_l)`.
///
/// When every raw relevance is zero the weights fall back to uniform.
pub fn token_relevance<S: TextSimilarity + ?Sized>(
    prompt: &str,
    tokens: &[TokenStep],
    similarity: &S,
) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::EmptyOutput);
    }
    let full = with_prompt(prompt, &crate::record::join_tokens(tokens.iter().map(|t| t.token.as_str())));
    let reduced: Vec<String> = (0..tokens.len())
        .map(|skip| {
            let rest = tokens.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, t)| t.token.as_str());
            with_prompt(prompt, &crate::record::join_tokens(rest))
        })
        .collect();
    let pairs: Vec<(&str, &str)> = reduced.iter().map(|r| (full.as_str(), r.as_str())).collect();
    let sims = similarity.similarity_batch(&pairs).map_err(|e| Error::SimilarityUnavailable(e.0))?;
    let raw: Vec<f64> = sims.iter().map(|g| (1.0 - g).max(0.0)).collect();
    Ok(normalize_weights(&raw))
}

pub(crate) fn normalize_weights(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|r| r / total).collect()
    } else {
        alloc::vec![1.0 / raw.len() as f64; raw.len()]
    }
}

/// `-Σ R̃_T(y_l) log P(y_l | y_<l, x)` for an arbitrary token sequence.
pub fn token_sar_tokens<S: TextSimilarity + ?Sized>(prompt: &str, tokens: &[TokenStep], similarity: &S) -> Result<f64> {
    let weights = token_relevance(prompt, tokens, similarity)?;
    Ok(-weights.iter().zip(tokens).map(|(w, t)| w * t.logprob).sum::<f64>())
}

/// TokenSAR of the decoded output.
pub fn token_sar<S: TextSimilarity + ?Sized>(record: &GenerationRecord, similarity: &S) -> Result<f64> {
    token_sar_tokens(&record.prompt, &record.output, similarity)
}

/// `1 - P("True" | x, y)` from the record's verification log-probability.
pub fn ptrue(record: &GenerationRecord) -> Result<f64> {
    let lp = record.ptrue_logprob.ok_or_else(|| Error::MissingPTrue { claim_id: String::new() })?;
    Ok((1.0 - exp(lp)).clamp(0.0, 1.0))
}

/// `1 - c` for a verbalized confidence `c ∈ [0, 1]`.
pub fn verbalized(record: &GenerationRecord) -> Result<f64> {
    let c = record.verbalized_confidence.ok_or(Error::MissingVerbalized)?;
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::RangeViolation { value: c });
    }
    Ok(1.0 - c)
}

#[cfg(test)]
mod tests {

    #[test]
    fn reflexive_scores() {
        let mut r = GenerationRecord::with_output("r", Vec::new());
        assert!(matches!(ptrue(&r), Err(Error::MissingPTrue { .. })));
        assert_eq!(verbalized(&r), Err(Error::MissingVerbalized));
        r.ptrue_logprob = Some((0.8f64).ln());
        r.verbalized_confidence = Some(0.25);
        assert!((ptrue(&r).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(verbalized(&r).unwrap(), 0.75);
    }

    use super::*;
    use crate::similarity::{ConstantSimilarity, Lexical, ProviderError};
    use alloc::string::ToString;
    use alloc::vec;
    use core::f64::consts::LN_2;

    fn uniform_step(token: &str, n: usize) -> TokenStep {
        let lp = -log(n as f64);
        let mut alternatives: Vec<(String, f64)> = (0..n).map(|i| (alloc::format!("t{i}"), lp)).collect();
        alternatives[0].0 = token.to_string();
        TokenStep {
            token: token.to_string(),
            logprob: lp,
            alternatives,
            tail_logmass: f64::NEG_INFINITY,
            uncond_logprob: None,
        }
    }

    fn one_hot_over(token: &str, n: usize) -> TokenStep {
        let mut alternatives = vec![(token.to_string(), 0.0)];
        for i in 1..n {
            alternatives.push((alloc::format!("t{i}"), f64::NEG_INFINITY));
        }
        TokenStep {
            token: token.to_string(),
            logprob: 0.0,
            alternatives,
            tail_logmass: f64::NEG_INFINITY,
            uncond_logprob: None,
        }
    }

    fn record(steps: Vec<TokenStep>) -> GenerationRecord {
        let r = GenerationRecord::with_output("r", steps);
        r.validate().unwrap();
        r
    }

    #[test]
    fn msp_hand_values() {
        assert_eq!(msp(&record(vec![one_hot_over("a", 1)])).unwrap(), 0.0);
        let r = record(vec![TokenStep::logprob_only("a", -LN_2), TokenStep::logprob_only("b", -LN_2)]);
        assert!((msp(&r).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(msp(&GenerationRecord::with_output("e", vec![])), Err(Error::EmptyOutput));
    }

    #[test]
    fn perplexity_hand_values() {
        let r = record(vec![TokenStep::logprob_only("a", 0.0); 3]);
        assert_eq!(perplexity(&r).unwrap(), 1.0);
        let r = record(vec![TokenStep::logprob_only("a", -LN_2); 4]);
        assert!((perplexity(&r).unwrap() - 2.0).abs() < 1e-14);
        let short = record(vec![TokenStep::logprob_only("a", -0.3); 2]);
        let long = record(vec![TokenStep::logprob_only("a", -0.3); 9]);
        assert!((perplexity(&short).unwrap() - perplexity(&long).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn entropy_hand_values() {
        let r = record(vec![one_hot_over("a", 4), one_hot_over("b", 3)]);
        assert_eq!(token_entropy(&r, EntropyMode::Mean).unwrap(), 0.0);
        let r = record(vec![uniform_step("a", 4), uniform_step("b", 4)]);
        assert!((token_entropy(&r, EntropyMode::Mean).unwrap() - log(4.0)).abs() < 1e-14);
        let r = record(vec![one_hot_over("a", 4), uniform_step("b", 4)]);
        assert!((token_entropy(&r, EntropyMode::Max).unwrap() - log(4.0)).abs() < 1e-14);
        let r = record(vec![TokenStep::logprob_only("a", -1.0)]);
        assert_eq!(token_entropy(&r, EntropyMode::Mean), Err(Error::MissingAlternatives { position: 0 }));
    }

    #[test]
    fn tail_counts_as_one_outcome() {
        let step = TokenStep {
            token: "a".into(),
            logprob: log(0.5),
            alternatives: vec![("a".into(), log(0.5))],
            tail_logmass: log(0.5),
            uncond_logprob: None,
        };
        assert!((step_entropy(0, &step).unwrap() - LN_2).abs() < 1e-15);
    }

    fn pmi_record(cond: f64, uncond: f64) -> GenerationRecord {
        let mut steps = vec![uniform_step("a", 1), uniform_step("b", 1)];
        for s in &mut steps {
            s.logprob = cond;
            s.alternatives[0].1 = cond;
            s.tail_logmass = libm::log1p(-exp(cond));
            s.uncond_logprob = Some(uncond);
        }
        record(steps)
    }

    #[test]
    fn pmi_hand_values() {
        assert_eq!(pmi(&pmi_record(-1.0, -1.0)).unwrap(), 0.0);
        assert!((pmi(&pmi_record(-1.0, -2.0)).unwrap() + 1.0).abs() < 1e-15);
        let swapped = pmi(&pmi_record(-2.0, -1.0)).unwrap();
        assert!((swapped - 1.0).abs() < 1e-15);
        let r = record(vec![TokenStep::logprob_only("a", -1.0)]);
        assert_eq!(pmi(&r), Err(Error::MissingUnconditional { position: 0 }));
    }

    #[test]
    fn cpmi_reductions() {
        let r = pmi_record(-1.0, -2.0);
        let nll = 1.0;
        let inf_tau = InfoParams { cpmi_tau: f64::INFINITY, ..InfoParams::default() };
        assert!((cpmi(&r, &inf_tau).unwrap() - nll).abs() < 1e-15);
        let no_lambda = InfoParams { cpmi_tau: 0.0, cpmi_lambda: 0.0, ..InfoParams::default() };
        assert!((cpmi(&r, &no_lambda).unwrap() - nll).abs() < 1e-15);
        let full = InfoParams { cpmi_tau: 0.0, cpmi_lambda: 1.0, ..InfoParams::default() };
        assert!((cpmi(&r, &full).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn renyi_closed_forms() {
        let params = InfoParams { renyi_alpha: 2.0, ..InfoParams::default() };
        let r = record(vec![uniform_step("a", 4), uniform_step("b", 7)]);
        assert!(renyi_divergence(&r, &params).unwrap().abs() < 1e-14);
        let r = record(vec![one_hot_over("a", 4)]);
        assert!((renyi_divergence(&r, &params).unwrap() - log(4.0)).abs() < 1e-14);
        let r = record(vec![one_hot_over("a", 4), uniform_step("b", 4)]);
        assert!((renyi_divergence(&r, &params).unwrap() - log(4.0) / 2.0).abs() < 1e-14);
        let bad = InfoParams { renyi_alpha: 1.0, ..InfoParams::default() };
        assert!(renyi_divergence(&r, &bad).is_err());
    }

    #[test]
    fn fisher_rao_closed_forms() {
        let r = record(vec![uniform_step("a", 5)]);
        assert!(fisher_rao(&r).unwrap().abs() < 1e-7);
        let r = record(vec![one_hot_over("a", 4)]);
        assert!((fisher_rao(&r).unwrap() - 2.0 / 3.0).abs() < 1e-14);
        let r = record(vec![uniform_step("a", 4), one_hot_over("b", 4)]);
        assert!((fisher_rao(&r).unwrap() - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn token_sar_uniform_and_weighted() {
        let r = record(vec![TokenStep::logprob_only("x", -3.0), TokenStep::logprob_only("y", -1.0)]);
        let constant = token_sar(&r, &ConstantSimilarity(0.4)).unwrap();
        assert!((constant - 2.0).abs() < 1e-15);
        assert!((constant - log(perplexity(&r).unwrap())).abs() < 1e-9);
        // g = 1 everywhere zeroes every relevance; falls back to uniform.
        assert!((token_sar(&r, &ConstantSimilarity(1.0)).unwrap() - 2.0).abs() < 1e-15);

        // Removing "x" changes the text, removing "y" does not (per this g).
        struct KeepsY;
        impl TextSimilarity for KeepsY {
            fn similarity(&self, _full: &str, reduced: &str) -> Result<f64, ProviderError> {
                Ok(if reduced.contains('x') { 1.0 } else { 0.0 })
            }
        }
        assert!((token_sar(&r, &KeepsY).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn token_sar_relevance_scale_invariance() {
        struct Scaled(f64);
        impl TextSimilarity for Scaled {
            fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError> {
                Ok(1.0 - self.0 * (1.0 - crate::text::rouge_l(a, b)))
            }
        }
        let mut r = record(vec![
            TokenStep::logprob_only("the", -0.2),
            TokenStep::logprob_only("cat", -2.0),
            TokenStep::logprob_only("sat", -0.7),
        ]);
        r.prompt = "where is the cat".into();
        let base = token_sar(&r, &Lexical::RougeL).unwrap();
        let scaled = token_sar(&r, &Scaled(0.25)).unwrap();
        assert!((base - scaled).abs() < 1e-12);
    }
}
