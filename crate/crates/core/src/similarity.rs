//! Response-similarity providers and the symmetric similarity matrix.
//!
//! Two provider traits exist: [`TextSimilarity`] scores a text pair in
//! `[0, 1]`, and [`NliProvider`] returns entailment/contradiction/neutral
//! probabilities. [`NliSimilarity`] adapts the latter into the former.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math::fabs;
use crate::text;

/// Failure reported by a similarity or NLI backend.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("similarity provider failed: {0}")]
pub struct ProviderError(pub String);

/// Probabilities of the three NLI relations for one ordered text pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliProbs {
    pub entail: f64,
    pub contra: f64,
    pub neutral: f64,
}

impl NliProbs {
    pub const ENTAIL: NliProbs = NliProbs { entail: 1.0, contra: 0.0, neutral: 0.0 };
    pub const CONTRA: NliProbs = NliProbs { entail: 0.0, contra: 1.0, neutral: 0.0 };
    pub const NEUTRAL: NliProbs = NliProbs { entail: 0.0, contra: 0.0, neutral: 1.0 };

    /// True when all three values are in `[0, 1]` and sum to 1 within `tol`.
    pub fn is_simplex(&self, tol: f64) -> bool {
        let parts = [self.entail, self.contra, self.neutral];
        parts.iter().all(|p| (0.0..=1.0).contains(p)) && fabs(parts.iter().sum::<f64>() - 1.0) <= tol
    }

    /// Most probable relation; ties resolve entail, then contra, then neutral.
    pub fn verdict(&self) -> NliVerdict {
        if self.entail >= self.contra && self.entail >= self.neutral {
            NliVerdict::Entail
        } else if self.contra >= self.neutral {
            NliVerdict::Contra
        } else {
            NliVerdict::Neutral
        }
    }
}

/// Discrete NLI outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliVerdict {
    Entail,
    Contra,
    Neutral,
}

/// Natural language inference over ordered `(premise, hypothesis)` pairs.
pub trait NliProvider {
    /// One probability triple per pair, in input order.
    fn nli_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliProbs>, ProviderError>;

    /// Identifier of the underlying model, used in cache keys.
    fn model_id(&self) -> &str {
        ""
    }

    fn nli(&self, premise: &str, hypothesis: &str) -> Result<NliProbs, ProviderError> {
        let mut out = self.nli_batch(&[(premise, hypothesis)])?;
        out.pop().ok_or_else(|| ProviderError("provider returned no result".into()))
    }
}

impl<P: NliProvider + ?Sized> NliProvider for &P {
    fn nli_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliProbs>, ProviderError> {
        (**self).nli_batch(pairs)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

/// Deterministic offline NLI: identical strings entail, anything else
/// contradicts.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubNli;

impl NliProvider for StubNli {
    fn nli_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliProbs>, ProviderError> {
        Ok(pairs.iter().map(|(p, h)| if p == h { NliProbs::ENTAIL } else { NliProbs::CONTRA }).collect())
    }

    fn model_id(&self) -> &str {
        "stub"
    }
}

/// Returns the same triple for every pair.
#[derive(Debug, Clone, Copy)]
pub struct ConstantNli(pub NliProbs);

impl NliProvider for ConstantNli {
    fn nli_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliProbs>, ProviderError> {
        Ok(pairs.iter().map(|_| self.0).collect())
    }

    fn model_id(&self) -> &str {
        "constant"
    }
}

/// Which NLI probability becomes a similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliMode {
    /// `s = p_entail`
    Entail,
    /// `s = 1 - p_contra`
    Contra,
}

pub fn similarity_from_nli(probs: NliProbs, mode: NliMode) -> f64 {
    let s = match mode {
        NliMode::Entail => probs.entail,
        NliMode::Contra => 1.0 - probs.contra,
    };
    s.clamp(0.0, 1.0)
}

/// A text-pair similarity in `[0, 1]`.
pub trait TextSimilarity {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError>;

    /// Scores many pairs; backends with batched transport override this.
    fn similarity_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ProviderError> {
        pairs.iter().map(|(a, b)| self.similarity(a, b)).collect()
    }
}

impl<T: TextSimilarity + ?Sized> TextSimilarity for &T {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError> {
        (**self).similarity(a, b)
    }

    fn similarity_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ProviderError> {
        (**self).similarity_batch(pairs)
    }
}

/// Built-in lexical similarity measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lexical {
    Jaccard,
    RougeL,
    Bleu,
}

impl TextSimilarity for Lexical {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError> {
        Ok(match self {
            Lexical::Jaccard => text::jaccard(a, b),
            Lexical::RougeL => text::rouge_l(a, b),
            Lexical::Bleu => text::bleu(a, b),
        })
    }
}

/// Constant similarity `g ≡ c`, useful for ablations and tests.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSimilarity(pub f64);

impl TextSimilarity for ConstantSimilarity {
    fn similarity(&self, _a: &str, _b: &str) -> Result<f64, ProviderError> {
        Ok(self.0)
    }
}

/// NLI probabilities turned into a similarity.
#[derive(Debug, Clone, Copy)]
pub struct NliSimilarity<P> {
    pub provider: P,
    pub mode: NliMode,
}

impl<P: NliProvider> TextSimilarity for NliSimilarity<P> {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError> {
        Ok(similarity_from_nli(self.provider.nli(a, b)?, self.mode))
    }

    fn similarity_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ProviderError> {
        let probs = self.provider.nli_batch(pairs)?;
        if probs.len() != pairs.len() {
            return Err(ProviderError("result count does not match request".into()));
        }
        Ok(probs.into_iter().map(|p| similarity_from_nli(p, self.mode)).collect())
    }
}

/// Tolerance on symmetry of a [`SimilarityMatrix`].
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Symmetric `K × K` response-similarity matrix with unit diagonal and
/// entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    entries: Matrix,
}

impl SimilarityMatrix {
    /// Symmetrizes `(S + Sᵀ)/2`, sets the diagonal to 1 and validates ranges.
    pub fn from_raw(raw: Matrix) -> Result<Self> {
        if !raw.is_square() {
            return Err(Error::DimensionMismatch { expected: raw.rows(), got: raw.cols() });
        }
        let k = raw.rows();
        let entries = Matrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.5 * (raw[(i, j)] + raw[(j, i)]) });
        Self::new(entries)
    }

    /// Wraps an already symmetric matrix, checking every invariant.
    pub fn new(entries: Matrix) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch { expected: entries.rows(), got: entries.cols() });
        }
        let k = entries.rows();
        for i in 0..k {
            if entries[(i, i)] != 1.0 {
                return Err(Error::InvalidParameter("similarity diagonal must be 1".into()));
            }
            for j in 0..k {
                let v = entries[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::RangeViolation { value: v });
                }
            }
        }
        if entries.max_asymmetry() > SYMMETRY_TOL {
            return Err(Error::InvalidParameter("similarity matrix is not symmetric".into()));
        }
        Ok(Self { entries })
    }

    pub fn identity(k: usize) -> Self {
        Self { entries: Matrix::identity(k) }
    }

    pub fn ones(k: usize) -> Self {
        Self { entries: Matrix::from_fn(k, k, |_, _| 1.0) }
    }

    pub fn k(&self) -> usize {
        self.entries.rows()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Simultaneous row/column permutation: new index `i` takes old `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.k();
        Self { entries: Matrix::from_fn(k, k, |i, j| self.entries[(perm[i], perm[j])]) }
    }
}

/// Builds `S_ij = (s(y_i, y_j) + s(y_j, y_i)) / 2` over the given texts.
pub fn build_similarity_matrix<S: TextSimilarity + ?Sized>(texts: &[&str], provider: &S) -> Result<SimilarityMatrix> {
    let k = texts.len();
    if k < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: k });
    }
    let mut pairs = Vec::with_capacity(k * (k - 1));
    for i in 0..k {
        for j in 0..k {
            if i != j {
                pairs.push((texts[i], texts[j]));
            }
        }
    }
    let scores = provider.similarity_batch(&pairs)?;
    if scores.len() != pairs.len() {
        return Err(ProviderError("result count does not match request".into()).into());
    }
    let mut raw = Matrix::identity(k);
    let mut it = scores.into_iter();
    for i in 0..k {
        for j in 0..k {
            if i != j {
                let s = it.next().unwrap_or(0.0);
                if !(0.0..=1.0).contains(&s) {
                    return Err(ProviderError("similarity outside [0, 1]".into()).into());
                }
                raw[(i, j)] = s;
            }
        }
    }
    SimilarityMatrix::from_raw(raw)
}
