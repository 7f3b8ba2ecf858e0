//! Deterministic lexical similarity and quality helpers over whitespace tokens.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{exp, log};

pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Jaccard similarity of the word sets. Two empty texts are identical (1.0).
pub fn jaccard(a: &str, b: &str) -> f64 {
    let sa: BTreeSet<&str> = a.split_whitespace().collect();
    let sb: BTreeSet<&str> = b.split_whitespace().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 (β = 1) from the longest common subsequence of word tokens.
/// Empty inputs score 0.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let c = words(candidate);
    let r = words(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&c, &r) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / c.len() as f64;
    let recall = lcs / r.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> BTreeMap<&'a [&'a str], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level BLEU with n-grams up to 4.
///
/// Unigram precision is unsmoothed; higher orders use add-one smoothing.
/// Brevity penalty `exp(1 - |r|/|c|)` applies when the candidate is shorter.
pub fn bleu(candidate: &str, reference: &str) -> f64 {
    let c = words(candidate);
    let r = words(reference);
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut log_precision = 0.0;
    for n in 1..=4 {
        let cand = ngram_counts(&c, n);
        let refs = ngram_counts(&r, n);
        let total: usize = cand.values().sum();
        let matched: usize = cand.iter().map(|(gram, count)| (*count).min(refs.get(gram).copied().unwrap_or(0))).sum();
        let p = if n == 1 {
            if matched == 0 {
                return 0.0;
            }
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_precision += log(p) / 4.0;
    }
    let brevity = if c.len() >= r.len() { 1.0 } else { exp(1.0 - r.len() as f64 / c.len() as f64) };
    brevity * exp(log_precision)
}

/// Normalization used by [`exact_accuracy`]: trimmed, lowercased, inner
/// whitespace runs collapsed to one space.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let mut out = String::new();
    for w in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

/// 1.0 when the normalized strings are equal, else 0.0.
pub fn exact_accuracy(candidate: &str, reference: &str) -> f64 {
    if normalize_answer(candidate) == normalize_answer(reference) {
        1.0
    } else {
        0.0
    }
}
