//! Sample-diversity estimators.
//!
//! White-box scores combine sampled responses with their log-probabilities
//! (Monte Carlo sequence entropy, semantic entropy, SentenceSAR, SAR).
//! Black-box scores look only at the sampled texts: semantic-set counting,
//! graph-Laplacian spectra of a [`SimilarityMatrix`], lexical overlap, and
//! frequency-based approximations of MSP, semantic entropy and P(True).

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::token_sar_tokens;
use crate::linalg::Matrix;
use crate::math::{log, log_sum_exp, sqrt};
use crate::record::{GenerationRecord, SampleResponse};
use crate::similarity::{Lexical, NliProvider, SimilarityMatrix, TextSimilarity};

/// Eigenvalues of the Laplacian below this count toward the default
/// eccentricity dimension.
pub const ECCENTRICITY_EIGEN_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityParams {
    /// Temperature `t` scaling the SentenceSAR relevance shift.
    pub sar_temperature: f64,
    /// Number of Laplacian eigenvectors for eccentricity; `None` picks the
    /// count of eigenvalues below [`ECCENTRICITY_EIGEN_THRESHOLD`].
    pub eccentricity_k: Option<usize>,
    /// Use per-token normalized sample probabilities.
    pub length_normalize: bool,
}

impl Default for DiversityParams {
    fn default() -> Self {
        Self { sar_temperature: 1e-3, eccentricity_k: None, length_normalize: false }
    }
}

impl DiversityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sar_temperature.is_finite() && self.sar_temperature > 0.0) {
            return Err(Error::InvalidParameter("sar_temperature must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// Partition of sample indices into meaning clusters; ids are contiguous and
/// assigned in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub cluster_of: Vec<usize>,
    pub m: usize,
}

impl ClusterAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.m];
        for &c in &self.cluster_of {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.m];
        for (i, &c) in self.cluster_of.iter().enumerate() {
            members[c].push(i);
        }
        members
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so labels are order-stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    fn assignment(mut self) -> ClusterAssignment {
        let n = self.parent.len();
        let mut label = BTreeMap::new();
        let mut cluster_of = Vec::with_capacity(n);
        for i in 0..n {
            let root = self.find(i);
            let next = label.len();
            cluster_of.push(*label.entry(root).or_insert(next));
        }
        ClusterAssignment { cluster_of, m: label.len() }
    }
}

pub fn sample_texts(record: &GenerationRecord) -> Vec<&str> {
    record.samples.iter().map(|s| s.text.as_str()).collect()
}

/// Merges responses `i < j` whenever entailment beats contradiction in both
/// directions; merging is closed transitively.
pub fn cluster_bidirectional<P: NliProvider + ?Sized>(texts: &[&str], provider: &P) -> Result<ClusterAssignment> {
    let k = texts.len();
    let mut uf = UnionFind::new(k);
    if k < 2 {
        return Ok(uf.assignment());
    }
    let mut index = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            index.push((i, j));
            pairs.push((texts[i], texts[j]));
            pairs.push((texts[j], texts[i]));
        }
    }
    let probs = provider.nli_batch(&pairs)?;
    if probs.len() != pairs.len() {
        return Err(crate::similarity::ProviderError("result count does not match request".into()).into());
    }
    for (n, &(i, j)) in index.iter().enumerate() {
        let forward = probs[2 * n];
        let backward = probs[2 * n + 1];
        if forward.entail > forward.contra && backward.entail > backward.contra {
            uf.union(i, j);
        }
    }
    Ok(uf.assignment())
}

fn sample_logprob(index: usize, sample: &SampleResponse, length_normalize: bool) -> Result<f64> {
    let lp = sample.total_logprob;
    if lp.is_nan() || lp == f64::INFINITY {
        return Err(Error::MissingSampleLogprobs { index });
    }
    Ok(if length_normalize { lp / sample.length() as f64 } else { lp })
}

fn sample_logprobs(record: &GenerationRecord, length_normalize: bool) -> Result<Vec<f64>> {
    if record.samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    record.samples.iter().enumerate().map(|(i, s)| sample_logprob(i, s, length_normalize)).collect()
}

/// `-(1/K) Σ log P(y^(k) | x)`, or with `P̄` when length-normalized.
pub fn mc_sequence_entropy(record: &GenerationRecord, params: &DiversityParams) -> Result<f64> {
    let lps = sample_logprobs(record, params.length_normalize)?;
    Ok(-lps.iter().sum::<f64>() / lps.len() as f64)
}

/// `-Σ_m (|C_m|/K) log Σ_{y ∈ C_m} P(y | x)` over bidirectional-entailment
/// clusters. Honors `length_normalize` the same way as
/// [`mc_sequence_entropy`].
pub fn semantic_entropy<P: NliProvider + ?Sized>(
    record: &GenerationRecord,
    provider: &P,
    params: &DiversityParams,
) -> Result<f64> {
    let lps = sample_logprobs(record, params.length_normalize)?;
    let clusters = cluster_bidirectional(&sample_texts(record), provider)?;
    let k = lps.len() as f64;
    let value = clusters
        .members()
        .iter()
        .map(|members| {
            let log_mass = log_sum_exp(members.iter().map(|&i| lps[i]));
            -(members.len() as f64 / k) * log_mass
        })
        .sum();
    Ok(value)
}

/// `-(1/K) Σ_k log(P_k + R_S(y_k)/t)` with `R_S(y_j) = Σ_{k≠j} g(y_j, y_k) P_k`,
/// evaluated in log space.
fn shifted_entropy<S: TextSimilarity + ?Sized>(
    logprobs: &[f64],
    texts: &[&str],
    similarity: &S,
    temperature: f64,
) -> Result<f64> {
    let k = logprobs.len();
    let mut pairs = Vec::with_capacity(k * k.saturating_sub(1));
    for j in 0..k {
        for i in 0..k {
            if i != j {
                pairs.push((texts[j], texts[i]));
            }
        }
    }
    let g = similarity.similarity_batch(&pairs).map_err(|e| Error::SimilarityUnavailable(e.0))?;
    let log_t = log(temperature);
    let mut it = g.into_iter();
    let mut total = 0.0;
    for j in 0..k {
        let mut terms = vec![logprobs[j]];
        for (i, &lp) in logprobs.iter().enumerate().take(k) {
            if i == j {
                continue;
            }
            let gji = it.next().unwrap_or(0.0);
            if gji > 0.0 {
                terms.push(log(gji) + lp - log_t);
            }
        }
        total += log_sum_exp(terms);
    }
    Ok(-total / k as f64)
}

/// SentenceSAR over the record's samples.
pub fn sentence_sar<S: TextSimilarity + ?Sized>(
    record: &GenerationRecord,
    similarity: &S,
    params: &DiversityParams,
) -> Result<f64> {
    params.validate()?;
    let lps = sample_logprobs(record, params.length_normalize)?;
    shifted_entropy(&lps, &sample_texts(record), similarity, params.sar_temperature)
}

/// SAR: SentenceSAR with each sample's probability replaced by
/// `exp(-TokenSAR(y^(k), x))`. Both relevance measures use `similarity`.
pub fn sar<S: TextSimilarity + ?Sized>(
    record: &GenerationRecord,
    similarity: &S,
    params: &DiversityParams,
) -> Result<f64> {
    params.validate()?;
    if record.samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let shifted = record
        .samples
        .iter()
        .enumerate()
        .map(|(index, s)| {
            if s.tokens.is_empty() {
                return Err(Error::MissingSampleTokens { index });
            }
            Ok(-token_sar_tokens(&record.prompt, &s.tokens, similarity)?)
        })
        .collect::<Result<Vec<_>>>()?;
    shifted_entropy(&shifted, &sample_texts(record), similarity, params.sar_temperature)
}

/// Number of semantic sets.
pub fn num_semantic_sets(assignment: &ClusterAssignment) -> f64 {
    assignment.m as f64
}

/// Degrees `D_ii = Σ_j S_ij`.
pub fn degrees(matrix: &SimilarityMatrix) -> Vec<f64> {
    let s = matrix.entries();
    (0..matrix.k()).map(|i| s.row(i).iter().sum()).collect()
}

/// `L = I - D^{-1/2} S D^{-1/2}`.
pub fn normalized_laplacian(matrix: &SimilarityMatrix) -> Result<Matrix> {
    let d = degrees(matrix);
    if let Some(row) = d.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::SingularDegree { row });
    }
    let inv_sqrt: Vec<f64> = d.iter().map(|v| 1.0 / sqrt(*v)).collect();
    let s = matrix.entries();
    let k = matrix.k();
    Ok(Matrix::from_fn(k, k, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - inv_sqrt[i] * s[(i, j)] * inv_sqrt[j]
    }))
}

/// `Σ_k max(0, 1 - λ_k)` over the Laplacian spectrum.
pub fn eigv_laplacian(matrix: &SimilarityMatrix) -> Result<f64> {
    let eig = normalized_laplacian(matrix)?.symmetric_eigen()?;
    Ok(eig.values.iter().map(|l| (1.0 - l).max(0.0)).sum())
}

/// `1 - trace(D) / K²`.
pub fn degree_matrix_score(matrix: &SimilarityMatrix) -> f64 {
    let k = matrix.k() as f64;
    1.0 - degrees(matrix).iter().sum::<f64>() / (k * k)
}

/// Frobenius norm of the centered spectral embeddings built from the
/// eigenvectors of the `k` smallest Laplacian eigenvalues.
pub fn eccentricity(matrix: &SimilarityMatrix, params: &DiversityParams) -> Result<f64> {
    let n = matrix.k();
    let eig = normalized_laplacian(matrix)?.symmetric_eigen()?;
    let dims = match params.eccentricity_k {
        Some(k) if k > n => return Err(Error::InvalidParameter("eccentricity_k exceeds number of samples".into())),
        Some(k) => k,
        None => eig.values.iter().filter(|l| **l < ECCENTRICITY_EIGEN_THRESHOLD).count().min(n),
    };
    let mut sum_sq = 0.0;
    for c in 0..dims {
        let col = eig.vectors.column(c);
        let centre = col.iter().sum::<f64>() / n as f64;
        sum_sq += col.iter().map(|v| (v - centre) * (v - centre)).sum::<f64>();
    }
    Ok(sqrt(sum_sq))
}

/// Negated mean pairwise similarity over ordered pairs `i ≠ j`.
pub fn lexical_similarity(texts: &[&str], metric: Lexical) -> Result<f64> {
    let k = texts.len();
    if k < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: k });
    }
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                total += metric.similarity(texts[i], texts[j])?;
            }
        }
    }
    Ok(-total / (k * (k - 1)) as f64)
}

/// `1 - max_j P̂(y^(j))` with frequency-based probabilities over trimmed texts.
pub fn label_prob(texts: &[&str]) -> Result<f64> {
    let k = texts.len();
    if k == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in texts {
        *counts.entry(t.trim()).or_insert(0) += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    Ok(1.0 - top as f64 / k as f64)
}

/// Semantic entropy with cluster probabilities `|C_m| / K`.
pub fn bb_semantic_entropy<P: NliProvider + ?Sized>(texts: &[&str], provider: &P) -> Result<f64> {
    let k = texts.len();
    if k < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: k });
    }
    let clusters = cluster_bidirectional(texts, provider)?;
    Ok(clusters
        .sizes()
        .iter()
        .map(|&n| {
            let p = n as f64 / k as f64;
            -p * log(p)
        })
        .sum())
}

/// `1 - (#"True" answers) / K`.
pub fn bb_ptrue(true_count: usize, k: usize) -> Result<f64> {
    if k == 0 || true_count > k {
        return Err(Error::InvalidParameter("need 0 <= true_count <= k and k >= 1".into()));
    }
    Ok(1.0 - true_count as f64 / k as f64)
}
