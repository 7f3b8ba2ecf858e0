//! Claim-level scores.
//!
//! A claim is a subset of output token indices. Information-based scores are
//! restricted to those indices; claim-conditioned probability (CCP) asks an
//! NLI model whether swapping a token for one of its alternatives keeps the
//! claim's meaning and only counts probability mass of meaning-relevant
//! alternatives.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{msp_steps, perplexity_steps, pmi_steps, token_entropy_steps, EntropyMode};
use crate::math::{exp, log_sum_exp};
use crate::record::{join_tokens, ClaimSpan, GenerationRecord, TokenStep};
use crate::similarity::{NliProvider, NliVerdict, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimBase {
    Msp,
    Perplexity,
    MeanEntropy,
    MaxEntropy,
    Pmi,
}

fn claim_steps<'a>(record: &'a GenerationRecord, indices: &[usize]) -> Result<Vec<(usize, &'a TokenStep)>> {
    let len = record.output.len();
    indices
        .iter()
        .map(|&index| record.output.get(index).map(|s| (index, s)).ok_or(Error::ClaimIndexOutOfRange { index, len }))
        .collect()
}

/// A sequence-level information score evaluated on the claim's tokens only.
pub fn claim_restricted_score(record: &GenerationRecord, claim: &ClaimSpan, base: ClaimBase) -> Result<f64> {
    let steps = claim_steps(record, &claim.token_indices)?;
    match base {
        ClaimBase::Msp => msp_steps(steps),
        ClaimBase::Perplexity => perplexity_steps(steps),
        ClaimBase::MeanEntropy => token_entropy_steps(steps, EntropyMode::Mean),
        ClaimBase::MaxEntropy => token_entropy_steps(steps, EntropyMode::Max),
        ClaimBase::Pmi => pmi_steps(steps),
    }
}

/// `1 - P("True" | claim, x)`.
pub fn claim_ptrue(claim: &ClaimSpan) -> Result<f64> {
    let lp = claim.ptrue_logprob.ok_or_else(|| Error::MissingPTrue { claim_id: claim.claim_id.clone() })?;
    Ok((1.0 - exp(lp)).clamp(0.0, 1.0))
}

/// `Σ_{entail} P / Σ_{entail ∪ contra} P` over the step's alternatives.
///
/// `verdicts` aligns with `step.alternatives`; the chosen token always counts
/// as entailing regardless of its listed verdict.
pub fn ccp_token(position: usize, step: &TokenStep, verdicts: &[NliVerdict]) -> Result<f64> {
    if step.alternatives.is_empty() {
        return Err(Error::MissingAlternatives { position });
    }
    if verdicts.len() != step.alternatives.len() {
        return Err(Error::LengthMismatch { left: step.alternatives.len(), right: verdicts.len() });
    }
    let mut entail = Vec::new();
    let mut relevant = Vec::new();
    for ((token, lp), verdict) in step.alternatives.iter().zip(verdicts) {
        let verdict = if *token == step.token { NliVerdict::Entail } else { *verdict };
        match verdict {
            NliVerdict::Entail => {
                entail.push(*lp);
                relevant.push(*lp);
            }
            NliVerdict::Contra => relevant.push(*lp),
            NliVerdict::Neutral => {}
        }
    }
    if relevant.is_empty() {
        return Err(Error::EmptyDenominator { position });
    }
    Ok(exp(log_sum_exp(entail) - log_sum_exp(relevant)).min(1.0))
}

/// Verdicts for every alternative at one span position: premise is the
/// original span text, hypothesis the text with that token replaced.
fn span_verdicts<P: NliProvider + ?Sized>(
    tokens: &[&str],
    slot: usize,
    step: &TokenStep,
    provider: &P,
) -> Result<Vec<NliVerdict>> {
    let original = join_tokens(tokens.iter().copied());
    let mut hypotheses: Vec<String> = Vec::new();
    let mut asked = Vec::new();
    for (k, (token, _)) in step.alternatives.iter().enumerate() {
        if *token == step.token {
            continue;
        }
        let swapped = tokens.iter().enumerate().map(|(i, t)| if i == slot { token.as_str() } else { *t });
        hypotheses.push(join_tokens(swapped));
        asked.push(k);
    }
    let mut verdicts = alloc::vec![NliVerdict::Entail; step.alternatives.len()];
    if asked.is_empty() {
        return Ok(verdicts);
    }
    let pairs: Vec<(&str, &str)> = hypotheses.iter().map(|h| (original.as_str(), h.as_str())).collect();
    let probs = provider.nli_batch(&pairs)?;
    if probs.len() != pairs.len() {
        return Err(ProviderError("result count does not match request".into()).into());
    }
    for (k, p) in asked.into_iter().zip(probs) {
        verdicts[k] = p.verdict();
    }
    Ok(verdicts)
}

fn ccp_span<P: NliProvider + ?Sized>(record: &GenerationRecord, indices: &[usize], provider: &P) -> Result<f64> {
    let steps = claim_steps(record, indices)?;
    if steps.is_empty() {
        return Err(Error::EmptyOutput);
    }
    let tokens: Vec<&str> = steps.iter().map(|(_, s)| s.token.as_str()).collect();
    let mut log_product = 0.0;
    for (slot, (position, step)) in steps.iter().enumerate() {
        if step.alternatives.is_empty() {
            return Err(Error::MissingAlternatives { position: *position });
        }
        let verdicts = span_verdicts(&tokens, slot, step, provider)?;
        log_product += crate::math::log(ccp_token(*position, step, &verdicts)?);
    }
    Ok((1.0 - exp(log_product)).max(0.0))
}

/// `1 - Π_{j ∈ C} CCP(y_j)`.
pub fn ccp_claim<P: NliProvider + ?Sized>(record: &GenerationRecord, claim: &ClaimSpan, provider: &P) -> Result<f64> {
    ccp_span(record, &claim.token_indices, provider)
}

/// CCP over the whole output.
pub fn ccp_sequence<P: NliProvider + ?Sized>(record: &GenerationRecord, provider: &P) -> Result<f64> {
    let all: Vec<usize> = (0..record.output.len()).collect();
    ccp_span(record, &all, provider)
}
