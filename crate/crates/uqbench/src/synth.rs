//! Seeded synthetic datasets that exercise every record field.
//!
//! Each record draws a latent difficulty `h`. Harder records get flatter
//! token distributions, more diverse samples, embeddings further from the
//! origin and more unsupported claims. Quality is a blend of the output
//! probability and independent noise controlled by `correlation`; at
//! `correlation = 1` and `noise = 0` it equals `P(y|x)` exactly.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uqbench_core::{ClaimLabel, ClaimSpan, GenerationRecord, SampleResponse, TokenStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub vocab_size: usize,
    /// Sampled responses per record.
    pub samples: usize,
    /// Half-width of the uniform noise added to quality.
    pub noise: f64,
    /// Weight of `P(y|x)` in quality; the rest is independent uniform noise.
    pub correlation: f64,
    pub seed: u64,
    pub max_len: usize,
    pub embedding_dim: usize,
    pub id_prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 100,
            vocab_size: 12,
            samples: 5,
            noise: 0.05,
            correlation: 0.8,
            seed: 0,
            max_len: 5,
            embedding_dim: 4,
            id_prefix: "r".into(),
        }
    }
}

/// Top-K size of every generated distribution.
const TOP_K: usize = 4;
/// Distinct sample answers available to a record.
const ANSWER_POOL: usize = 4;

fn token_step(rng: &mut ChaCha8Rng, vocab: usize, h: f64) -> TokenStep {
    let k = TOP_K.min(vocab);
    let ids = sample(rng, vocab, k).into_vec();
    let has_tail = vocab > k;
    // chosen-token mass shrinks with difficulty
    let chosen = 1.0 - h * rng.random_range(0.3..0.95);
    let mut weights: Vec<f64> = (0..k - 1 + usize::from(has_tail)).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w *= (1.0 - chosen) / total;
    }
    let tail = if has_tail { weights.pop().unwrap_or(0.0) } else { 0.0 };
    let mut alternatives: Vec<(String, f64)> = vec![(format!("w{}", ids[0]), chosen.ln())];
    if k == 1 {
        alternatives[0].1 = 0.0;
    }
    alternatives.extend(ids[1..].iter().zip(&weights).map(|(id, w)| (format!("w{id}"), w.ln())));
    let token = alternatives[0].0.clone();
    let logprob = alternatives[0].1;
    alternatives.sort_by(|a, b| b.1.total_cmp(&a.1));
    TokenStep {
        token,
        logprob,
        alternatives,
        tail_logmass: if has_tail { tail.ln() } else { f64::NEG_INFINITY },
        uncond_logprob: Some(logprob - rng.random_range(0.0..2.0)),
    }
}

fn sample_response(rng: &mut ChaCha8Rng, text: String) -> SampleResponse {
    let tokens: Vec<TokenStep> =
        text.split(' ').map(|w| TokenStep::logprob_only(w, -rng.random_range(0.01..3.0))).collect();
    let total_logprob = tokens.iter().map(|t| t.logprob).sum();
    SampleResponse { text, total_logprob, tokens }
}

fn record(rng: &mut ChaCha8Rng, spec: &SynthSpec, index: usize) -> GenerationRecord {
    let h: f64 = rng.random_range(0.0..1.0);
    let len = rng.random_range(1..=spec.max_len.max(1));
    let vocab = spec.vocab_size.max(1);
    let output: Vec<TokenStep> = (0..len).map(|_| token_step(rng, vocab, h)).collect();
    let mut r = GenerationRecord::with_output(format!("{}{index}", spec.id_prefix), output);
    r.prompt = format!("question {index}");

    let greedy = r.output_text();
    let answers: Vec<String> =
        (0..ANSWER_POOL).map(|a| if a == 0 { greedy.clone() } else { format!("{greedy} alt{a}") }).collect();
    r.samples = (0..spec.samples)
        .map(|_| {
            let pick = if rng.random_bool(1.0 - h) { 0 } else { rng.random_range(0..ANSWER_POOL) };
            sample_response(rng, answers[pick].clone())
        })
        .collect();

    if spec.embedding_dim > 0 {
        let scale = 0.5 + 3.0 * h;
        r.embedding = Some((0..spec.embedding_dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect());
    }

    let p = r.output_logprob().exp();
    let rho = spec.correlation.clamp(0.0, 1.0);
    let blend = if rho == 1.0 { p } else { rho * p + (1.0 - rho) * rng.random_range(0.0..1.0) };
    let jitter = if spec.noise > 0.0 { rng.random_range(-spec.noise..spec.noise) } else { 0.0 };
    let q = (blend + jitter).clamp(0.0, 1.0);
    r.quality = BTreeMap::from([("accuracy".to_owned(), f64::from(u8::from(q >= 0.5))), ("rouge_l".to_owned(), q)]);

    let split = len.div_ceil(2);
    let spans: Vec<Vec<usize>> =
        if len >= 2 { vec![(0..split).collect(), (split..len).collect()] } else { vec![vec![0]] };
    r.claims = spans
        .into_iter()
        .enumerate()
        .map(|(c, token_indices)| {
            let support: f64 = token_indices.iter().map(|&i| r.output[i].logprob).sum::<f64>().exp();
            let label = if rng.random_bool(0.1) {
                ClaimLabel::Unknown
            } else if rng.random_range(0.0..1.0) < support {
                ClaimLabel::Supported
            } else {
                ClaimLabel::Unsupported
            };
            ClaimSpan {
                claim_id: format!("c{c}"),
                token_indices,
                label,
                ptrue_logprob: Some((support * rng.random_range(0.5..1.0)).max(1e-6).ln()),
            }
        })
        .collect();
    r.ptrue_logprob = Some((p * rng.random_range(0.5..1.0)).max(1e-6).ln());
    r.verbalized_confidence = Some((p + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0));
    r
}

/// Records for `spec`, identical for identical specs.
pub fn generate(spec: &SynthSpec) -> Vec<GenerationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.n).map(|i| record(&mut rng, spec, i)).collect()
}
