//! The record data model shared by every scorer.
//!
//! A [`GenerationRecord`] holds one model response: the decoded output with
//! per-token top-K distributions, optional sampled responses, an optional
//! embedding, quality scores and annotated claims. Log-probabilities are
//! natural logs. Each token distribution is the listed alternatives plus one
//! aggregated tail outcome; `tail_logmass = -inf` means the list is exhaustive.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{exp, log_sum_exp};

/// Tolerance on `logsumexp(alternatives ∪ tail) = 0`.
pub const NORMALIZATION_TOL: f64 = 1e-6;
/// Tolerance on the chosen token's listed log-probability.
pub const CHOSEN_LOGPROB_TOL: f64 = 1e-9;
/// Tolerance on `total_logprob = Σ token logprobs` for samples.
pub const SAMPLE_TOTAL_TOL: f64 = 1e-6;

/// Quality metrics whose values must lie in `[0, 1]`.
pub const UNIT_QUALITY_METRICS: &[&str] = &["alignscore", "accuracy"];

/// One decoding position of a response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenStep {
    pub token: String,
    #[serde(with = "wire_float")]
    pub logprob: f64,
    /// Top-K candidates at this position, including the chosen token, sorted
    /// by descending log-probability.
    #[serde(default, with = "wire_alternatives")]
    pub alternatives: Vec<(String, f64)>,
    /// Log of the probability mass outside `alternatives`.
    #[serde(default, with = "wire_float")]
    pub tail_logmass: f64,
    /// `log P(y_l | y_<l)` without the prompt.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "wire_opt_float")]
    pub uncond_logprob: Option<f64>,
}

impl TokenStep {
    /// A step with only the chosen token's log-probability and no distribution.
    pub fn logprob_only(token: impl Into<String>, logprob: f64) -> Self {
        Self { token: token.into(), logprob, alternatives: Vec::new(), tail_logmass: 0.0, uncond_logprob: None }
    }

    pub fn has_distribution(&self) -> bool {
        !self.alternatives.is_empty()
    }

    /// Log-probabilities of every outcome of the truncated distribution:
    /// each listed alternative, then the tail pseudo-symbol when it has mass.
    pub fn outcome_logprobs(&self) -> impl Iterator<Item = f64> + '_ {
        let tail = (self.tail_logmass > f64::NEG_INFINITY).then_some(self.tail_logmass);
        self.alternatives.iter().map(|(_, lp)| *lp).chain(tail)
    }

    /// Number of outcomes in the truncated distribution (tail counted once).
    pub fn outcome_count(&self) -> usize {
        self.alternatives.len() + usize::from(self.tail_logmass > f64::NEG_INFINITY)
    }

    fn validate(&self, sample: Option<usize>, position: usize) -> Result<(), RecordError> {
        let at = StepLocation { sample, position };
        if self.logprob.is_nan() || self.logprob > CHOSEN_LOGPROB_TOL {
            return Err(RecordError::InvalidLogprob { at });
        }
        if let Some(u) = self.uncond_logprob {
            if u.is_nan() || u > CHOSEN_LOGPROB_TOL {
                return Err(RecordError::InvalidLogprob { at });
            }
        }
        if self.alternatives.is_empty() {
            return Ok(());
        }
        if self.alternatives.iter().any(|(_, lp)| lp.is_nan()) || self.tail_logmass.is_nan() {
            return Err(RecordError::InvalidLogprob { at });
        }
        if self.alternatives.windows(2).any(|w| w[0].1 < w[1].1) {
            return Err(RecordError::UnsortedAlternatives { at });
        }
        let mut chosen = self.alternatives.iter().filter(|(t, _)| *t == self.token);
        match (chosen.next(), chosen.next()) {
            (None, _) => return Err(RecordError::ChosenTokenMissing { at }),
            (Some(_), Some(_)) => return Err(RecordError::ChosenTokenDuplicated { at }),
            (Some((_, lp)), None) => {
                let matches = (*lp == self.logprob) || (lp - self.logprob).abs() <= CHOSEN_LOGPROB_TOL;
                if !matches {
                    return Err(RecordError::ChosenLogprobMismatch { at });
                }
            }
        }
        let log_mass = log_sum_exp(self.outcome_logprobs());
        if !(log_mass.abs() <= NORMALIZATION_TOL) {
            return Err(RecordError::Normalization { at, mass: exp(log_mass) });
        }
        Ok(())
    }
}

/// A sampled response `y^(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleResponse {
    pub text: String,
    #[serde(with = "wire_float")]
    pub total_logprob: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<TokenStep>,
}

impl SampleResponse {
    /// Number of tokens, falling back to whitespace words when the sample
    /// carries no token steps.
    pub fn length(&self) -> usize {
        if self.tokens.is_empty() {
            self.text.split_whitespace().count().max(1)
        } else {
            self.tokens.len()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimLabel {
    Supported,
    Unsupported,
    Unknown,
}

/// An atomic claim mapped onto output token indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimSpan {
    pub claim_id: String,
    pub token_indices: Vec<usize>,
    pub label: ClaimLabel,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "wire_opt_float")]
    pub ptrue_logprob: Option<f64>,
}

/// One model response with everything the scorers consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRecord {
    pub id: String,
    pub prompt: String,
    pub output: Vec<TokenStep>,
    #[serde(default)]
    pub samples: Vec<SampleResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, with = "wire_float_map")]
    pub quality: BTreeMap<String, f64>,
    #[serde(default)]
    pub claims: Vec<ClaimSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "wire_opt_float")]
    pub ptrue_logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "wire_opt_float")]
    pub verbalized_confidence: Option<f64>,
}

impl GenerationRecord {
    /// An otherwise empty record with the given output steps.
    pub fn with_output(id: impl Into<String>, output: Vec<TokenStep>) -> Self {
        Self {
            id: id.into(),
            prompt: String::new(),
            output,
            samples: Vec::new(),
            embedding: None,
            quality: BTreeMap::new(),
            claims: Vec::new(),
            ptrue_logprob: None,
            verbalized_confidence: None,
        }
    }

    /// `log P(y | x)` of the decoded output.
    pub fn output_logprob(&self) -> f64 {
        self.output.iter().map(|s| s.logprob).sum()
    }

    /// Output tokens joined with single spaces.
    pub fn output_text(&self) -> String {
        join_tokens(self.output.iter().map(|s| s.token.as_str()))
    }

    /// Checks every invariant of the record model.
    pub fn validate(&self) -> Result<(), RecordError> {
        for (position, step) in self.output.iter().enumerate() {
            step.validate(None, position)?;
        }
        for (index, sample) in self.samples.iter().enumerate() {
            if sample.total_logprob.is_nan() {
                return Err(RecordError::SampleTotalMismatch { sample: index });
            }
            for (position, step) in sample.tokens.iter().enumerate() {
                step.validate(Some(index), position)?;
            }
            if !sample.tokens.is_empty() {
                let sum: f64 = sample.tokens.iter().map(|t| t.logprob).sum();
                let equal = sum == sample.total_logprob || (sum - sample.total_logprob).abs() <= SAMPLE_TOTAL_TOL;
                if !equal {
                    return Err(RecordError::SampleTotalMismatch { sample: index });
                }
            }
        }
        if let Some(embedding) = &self.embedding {
            if embedding.iter().any(|v| !v.is_finite()) {
                return Err(RecordError::NonFinite { field: "embedding" });
            }
        }
        for (name, value) in &self.quality {
            if value.is_nan() {
                return Err(RecordError::NonFinite { field: "quality" });
            }
            if UNIT_QUALITY_METRICS.contains(&name.as_str()) && !(0.0..=1.0).contains(value) {
                return Err(RecordError::OutOfRange { field: "quality" });
            }
        }
        for claim in &self.claims {
            let increasing = claim.token_indices.windows(2).all(|w| w[0] < w[1]);
            let in_range = claim.token_indices.iter().all(|&i| i < self.output.len());
            if !increasing || !in_range {
                return Err(RecordError::ClaimIndices { claim_id: claim.claim_id.clone() });
            }
            if let Some(lp) = claim.ptrue_logprob {
                if lp.is_nan() || lp > CHOSEN_LOGPROB_TOL {
                    return Err(RecordError::OutOfRange { field: "claims.ptrue_logprob" });
                }
            }
        }
        if let Some(lp) = self.ptrue_logprob {
            if lp.is_nan() || lp > CHOSEN_LOGPROB_TOL {
                return Err(RecordError::OutOfRange { field: "ptrue_logprob" });
            }
        }
        if let Some(c) = self.verbalized_confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(RecordError::OutOfRange { field: "verbalized_confidence" });
            }
        }
        Ok(())
    }
}

/// A calibration-set observation `(u_i, q_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPair {
    pub uncertainty: f64,
    pub quality: f64,
}

impl CalibrationPair {
    pub fn new(uncertainty: f64, quality: f64) -> Self {
        Self { uncertainty, quality }
    }
}

/// Location of a token step: the decoded output, or sample `sample`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepLocation {
    pub sample: Option<usize>,
    pub position: usize,
}

impl core::fmt::Display for StepLocation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self.sample {
            Some(s) => write!(f, "sample {s} position {}", self.position),
            None => write!(f, "output position {}", self.position),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecordError {
    #[error("{at}: alternatives carry total probability {mass}, expected 1")]
    Normalization { at: StepLocation, mass: f64 },
    #[error("{at}: alternatives not sorted by descending log-probability")]
    UnsortedAlternatives { at: StepLocation },
    #[error("{at}: chosen token not among alternatives")]
    ChosenTokenMissing { at: StepLocation },
    #[error("{at}: chosen token listed more than once")]
    ChosenTokenDuplicated { at: StepLocation },
    #[error("{at}: chosen token log-probability disagrees with its alternative entry")]
    ChosenLogprobMismatch { at: StepLocation },
    #[error("{at}: log-probability must be a number <= 0")]
    InvalidLogprob { at: StepLocation },
    #[error("sample {sample}: total_logprob disagrees with its tokens")]
    SampleTotalMismatch { sample: usize },
    #[error("claim {claim_id}: token indices must be strictly increasing and inside the output")]
    ClaimIndices { claim_id: String },
    #[error("field {field} out of range")]
    OutOfRange { field: &'static str },
    #[error("field {field} is not finite")]
    NonFinite { field: &'static str },
}

pub(crate) fn join_tokens<'a>(tokens: impl Iterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for token in tokens {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

/// Floats on the wire: JSON numbers, with non-finite values as the strings
/// `"-inf"`, `"inf"` and `"nan"`.
mod wire_float {
    use core::fmt;

    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            serializer.serialize_f64(*value)
        } else if value.is_nan() {
            serializer.serialize_str("nan")
        } else if *value < 0.0 {
            serializer.serialize_str("-inf")
        } else {
            serializer.serialize_str("inf")
        }
    }

    struct WireFloat;

    impl<'de> Visitor<'de> for WireFloat {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a number or one of \"-inf\", \"inf\", \"nan\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" => Ok(f64::INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        deserializer.deserialize_any(WireFloat)
    }

    /// Newtype so containers can reuse the float representation.
    #[derive(Clone, Copy)]
    pub struct Wire(pub f64);

    impl serde::Serialize for Wire {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            serialize(&self.0, s)
        }
    }

    impl<'de> serde::Deserialize<'de> for Wire {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            deserialize(d).map(Wire)
        }
    }
}

mod wire_opt_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::wire_float::Wire;

    pub fn serialize<S: Serializer>(value: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        value.map(Wire).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Wire>::deserialize(d)?.map(|w| w.0))
    }
}

mod wire_alternatives {
    use alloc::string::String;
    use alloc::vec::Vec;

    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    use super::wire_float::Wire;

    pub fn serialize<S: Serializer>(value: &[(String, f64)], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(value.len()))?;
        for (token, lp) in value {
            seq.serialize_element(&(token, Wire(*lp)))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(String, f64)>, D::Error> {
        let raw = Vec::<(String, Wire)>::deserialize(d)?;
        Ok(raw.into_iter().map(|(t, w)| (t, w.0)).collect())
    }
}

mod wire_float_map {
    use alloc::collections::BTreeMap;
    use alloc::string::String;

    use serde::ser::SerializeMap;
    use serde::{Deserialize, Deserializer, Serializer};

    use super::wire_float::Wire;

    pub fn serialize<S: Serializer>(value: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(value.len()))?;
        for (k, v) in value {
            map.serialize_entry(k, &Wire(*v))?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let raw = BTreeMap::<String, Wire>::deserialize(d)?;
        Ok(raw.into_iter().map(|(k, w)| (k, w.0)).collect())
    }
}
