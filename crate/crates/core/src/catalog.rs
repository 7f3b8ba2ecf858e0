//! Registry of every scoring method by id, plus per-record dispatch.
//!
//! Dataset-level methods ([`Method::Huq`]) combine other methods' scores and
//! are assembled by the caller; everything else scores one record at a time
//! through [`score_record`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::claim::{self, ClaimBase};
use crate::density::{self, GaussianFit, RdeFit};
use crate::diversity::{self, DiversityParams};
use crate::error::{Error, Result};
use crate::info::{self, EntropyMode, InfoParams};
use crate::record::GenerationRecord;
use crate::similarity::{
    build_similarity_matrix, Lexical, NliMode, NliProvider, NliSimilarity, SimilarityMatrix, TextSimilarity,
};
use crate::text::normalize_answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Sequence,
    Claim,
}

/// Source of the response-similarity matrix for spectral methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    Jaccard,
    RougeL,
    Bleu,
    NliEntail,
    NliContra,
    Precomputed,
}

impl SimilarityKind {
    pub const ALL: [SimilarityKind; 6] = [
        SimilarityKind::Jaccard,
        SimilarityKind::RougeL,
        SimilarityKind::Bleu,
        SimilarityKind::NliEntail,
        SimilarityKind::NliContra,
        SimilarityKind::Precomputed,
    ];

    pub fn id(self) -> &'static str {
        match self {
            SimilarityKind::Jaccard => "jaccard",
            SimilarityKind::RougeL => "rouge_l",
            SimilarityKind::Bleu => "bleu",
            SimilarityKind::NliEntail => "nli_entail",
            SimilarityKind::NliContra => "nli_contra",
            SimilarityKind::Precomputed => "precomputed",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id)
    }

    pub fn lexical(self) -> Option<Lexical> {
        match self {
            SimilarityKind::Jaccard => Some(Lexical::Jaccard),
            SimilarityKind::RougeL => Some(Lexical::RougeL),
            SimilarityKind::Bleu => Some(Lexical::Bleu),
            _ => None,
        }
    }

    pub fn uses_nli(self) -> bool {
        matches!(self, SimilarityKind::NliEntail | SimilarityKind::NliContra)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    MaximumSequenceProbability,
    Perplexity,
    MeanTokenEntropy,
    MaxTokenEntropy,
    PointwiseMutualInformation,
    ConditionalPointwiseMutualInformation,
    RenyiDivergence,
    FisherRao,
    TokenSar,
    MonteCarloSequenceEntropy,
    MonteCarloNormalizedSequenceEntropy,
    SemanticEntropy,
    SentenceSar,
    Sar,
    MahalanobisDistance,
    RelativeMahalanobisDistance,
    Rde,
    Huq,
    PTrue,
    Ccp,
    NumSemSets,
    EigValLaplacian(SimilarityKind),
    DegMat(SimilarityKind),
    Eccentricity(SimilarityKind),
    LexicalSimilarityRougeL,
    LexicalSimilarityBleu,
    LabelProb,
    BbSemanticEntropy,
    BbPTrue,
    VerbalizedConfidence,
    ClaimMaximumSequenceProbability,
    ClaimPerplexity,
    ClaimMeanTokenEntropy,
    ClaimMaxTokenEntropy,
    ClaimPointwiseMutualInformation,
    ClaimPTrue,
    ClaimCcp,
}

const FIXED: &[(Method, &str)] = &[
    (Method::MaximumSequenceProbability, "maximum_sequence_probability"),
    (Method::Perplexity, "perplexity"),
    (Method::MeanTokenEntropy, "mean_token_entropy"),
    (Method::MaxTokenEntropy, "max_token_entropy"),
    (Method::PointwiseMutualInformation, "pointwise_mutual_information"),
    (Method::ConditionalPointwiseMutualInformation, "conditional_pointwise_mutual_information"),
    (Method::RenyiDivergence, "renyi_divergence"),
    (Method::FisherRao, "fisher_rao"),
    (Method::TokenSar, "token_sar"),
    (Method::MonteCarloSequenceEntropy, "monte_carlo_sequence_entropy"),
    (Method::MonteCarloNormalizedSequenceEntropy, "monte_carlo_normalized_sequence_entropy"),
    (Method::SemanticEntropy, "semantic_entropy"),
    (Method::SentenceSar, "sentence_sar"),
    (Method::Sar, "sar"),
    (Method::MahalanobisDistance, "mahalanobis_distance"),
    (Method::RelativeMahalanobisDistance, "relative_mahalanobis_distance"),
    (Method::Rde, "rde"),
    (Method::Huq, "huq"),
    (Method::PTrue, "p_true"),
    (Method::Ccp, "ccp"),
    (Method::NumSemSets, "num_sem_sets"),
    (Method::LexicalSimilarityRougeL, "lexical_similarity_rouge_l"),
    (Method::LexicalSimilarityBleu, "lexical_similarity_bleu"),
    (Method::LabelProb, "label_prob"),
    (Method::BbSemanticEntropy, "bb_semantic_entropy"),
    (Method::BbPTrue, "bb_p_true"),
    (Method::VerbalizedConfidence, "verbalized_confidence"),
    (Method::ClaimMaximumSequenceProbability, "claim_maximum_sequence_probability"),
    (Method::ClaimPerplexity, "claim_perplexity"),
    (Method::ClaimMeanTokenEntropy, "claim_mean_token_entropy"),
    (Method::ClaimMaxTokenEntropy, "claim_max_token_entropy"),
    (Method::ClaimPointwiseMutualInformation, "claim_pointwise_mutual_information"),
    (Method::ClaimPTrue, "claim_p_true"),
    (Method::ClaimCcp, "claim_ccp"),
];

impl Method {
    /// Every registered method, spectral methods once per similarity kind.
    pub fn all() -> Vec<Method> {
        let mut out: Vec<Method> = FIXED.iter().map(|(m, _)| *m).collect();
        for kind in SimilarityKind::ALL {
            out.push(Method::EigValLaplacian(kind));
            out.push(Method::DegMat(kind));
            out.push(Method::Eccentricity(kind));
        }
        out.sort();
        out
    }

    pub fn id(&self) -> String {
        match self {
            Method::EigValLaplacian(k) => format!("eigval_laplacian_{}", k.id()),
            Method::DegMat(k) => format!("degmat_{}", k.id()),
            Method::Eccentricity(k) => format!("eccentricity_{}", k.id()),
            other => FIXED.iter().find(|(m, _)| m == other).map(|(_, id)| String::from(*id)).unwrap_or_default(),
        }
    }

    pub fn from_id(id: &str) -> Option<Method> {
        if let Some((_, m)) = FIXED.iter().map(|(m, s)| (*s, *m)).find(|(s, _)| *s == id) {
            return Some(m);
        }
        let spectral = [
            ("eigval_laplacian_", Method::EigValLaplacian as fn(SimilarityKind) -> Method),
            ("degmat_", Method::DegMat),
            ("eccentricity_", Method::Eccentricity),
        ];
        spectral.iter().find_map(|(prefix, make)| id.strip_prefix(prefix).and_then(SimilarityKind::from_id).map(make))
    }

    pub fn level(&self) -> Level {
        match self {
            Method::ClaimMaximumSequenceProbability
            | Method::ClaimPerplexity
            | Method::ClaimMeanTokenEntropy
            | Method::ClaimMaxTokenEntropy
            | Method::ClaimPointwiseMutualInformation
            | Method::ClaimPTrue
            | Method::ClaimCcp => Level::Claim,
            _ => Level::Sequence,
        }
    }

    /// Methods computed from other methods' scores over a whole dataset.
    pub fn is_dataset_level(&self) -> bool {
        matches!(self, Method::Huq)
    }

    pub fn uses_nli(&self) -> bool {
        match self {
            Method::SemanticEntropy
            | Method::Ccp
            | Method::NumSemSets
            | Method::BbSemanticEntropy
            | Method::ClaimCcp => true,
            Method::EigValLaplacian(k) | Method::DegMat(k) | Method::Eccentricity(k) => k.uses_nli(),
            _ => false,
        }
    }

    /// Needs a fitted density model in [`DensityFits`].
    pub fn uses_density(&self) -> bool {
        matches!(self, Method::MahalanobisDistance | Method::RelativeMahalanobisDistance | Method::Rde | Method::Huq)
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.id())
    }
}

/// One score; higher means more uncertain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub record_id: String,
    pub method: String,
    pub level: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim_id: Option<String>,
    pub value: f64,
}

/// Looks up externally supplied similarity matrices.
pub trait MatrixStore {
    fn matrix(&self, record_id: &str) -> Option<SimilarityMatrix>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DensityFits<'a> {
    pub gaussian: Option<&'a GaussianFit>,
    pub background: Option<&'a GaussianFit>,
    pub rde: Option<&'a RdeFit>,
}

/// Providers, fitted models and parameters shared by every record.
#[derive(Clone, Copy)]
pub struct ScoringContext<'a> {
    pub info: InfoParams,
    pub diversity: DiversityParams,
    pub nli: &'a (dyn NliProvider + Sync),
    /// `g` for TokenSAR, SentenceSAR and SAR.
    pub sar_similarity: &'a (dyn TextSimilarity + Sync),
    pub matrices: Option<&'a (dyn MatrixStore + Sync)>,
    pub density: DensityFits<'a>,
}

fn fit_or_missing<T>(fit: Option<T>, what: &str) -> Result<T> {
    fit.ok_or_else(|| Error::InvalidParameter(format!("no fitted {what} model")))
}

/// Similarity matrix of a record's samples for the given kind.
pub fn similarity_matrix(
    record: &GenerationRecord,
    kind: SimilarityKind,
    ctx: &ScoringContext<'_>,
) -> Result<SimilarityMatrix> {
    let texts = diversity::sample_texts(record);
    match kind {
        SimilarityKind::Precomputed => {
            let store =
                ctx.matrices.ok_or_else(|| Error::SimilarityUnavailable("no precomputed similarity file".into()))?;
            let m = store
                .matrix(&record.id)
                .ok_or_else(|| Error::SimilarityUnavailable(format!("no matrix for record {}", record.id)))?;
            if m.k() != texts.len() {
                return Err(Error::DimensionMismatch { expected: texts.len(), got: m.k() });
            }
            Ok(m)
        }
        SimilarityKind::NliEntail | SimilarityKind::NliContra => {
            let mode = if kind == SimilarityKind::NliEntail { NliMode::Entail } else { NliMode::Contra };
            build_similarity_matrix(&texts, &NliSimilarity { provider: ctx.nli, mode })
        }
        lexical => build_similarity_matrix(&texts, &lexical.lexical().unwrap_or(Lexical::Jaccard)),
    }
}

fn embedding_score(
    record: &GenerationRecord,
    fit: Option<&GaussianFit>,
    f: impl FnOnce(&GaussianFit, &[f64]) -> Result<f64>,
) -> Result<f64> {
    let fit = fit_or_missing(fit, "Gaussian")?;
    f(fit, density::record_embedding(record)?)
}

/// Samples whose normalized text is "true", for BB P(True) records whose
/// samples are the model's verification answers.
pub fn count_true_answers(record: &GenerationRecord) -> usize {
    record.samples.iter().filter(|s| normalize_answer(&s.text) == "true").count()
}

fn sequence_value(method: Method, record: &GenerationRecord, ctx: &ScoringContext<'_>) -> Result<f64> {
    let texts = || diversity::sample_texts(record);
    match method {
        Method::MaximumSequenceProbability => info::msp(record),
        Method::Perplexity => info::perplexity(record),
        Method::MeanTokenEntropy => info::token_entropy(record, EntropyMode::Mean),
        Method::MaxTokenEntropy => info::token_entropy(record, EntropyMode::Max),
        Method::PointwiseMutualInformation => info::pmi(record),
        Method::ConditionalPointwiseMutualInformation => info::cpmi(record, &ctx.info),
        Method::RenyiDivergence => info::renyi_divergence(record, &ctx.info),
        Method::FisherRao => info::fisher_rao(record),
        Method::TokenSar => info::token_sar(record, ctx.sar_similarity),
        Method::MonteCarloSequenceEntropy => {
            let p = DiversityParams { length_normalize: false, ..ctx.diversity };
            diversity::mc_sequence_entropy(record, &p)
        }
        Method::MonteCarloNormalizedSequenceEntropy => {
            let p = DiversityParams { length_normalize: true, ..ctx.diversity };
            diversity::mc_sequence_entropy(record, &p)
        }
        Method::SemanticEntropy => diversity::semantic_entropy(record, ctx.nli, &ctx.diversity),
        Method::SentenceSar => diversity::sentence_sar(record, ctx.sar_similarity, &ctx.diversity),
        Method::Sar => diversity::sar(record, ctx.sar_similarity, &ctx.diversity),
        Method::MahalanobisDistance => embedding_score(record, ctx.density.gaussian, density::mahalanobis),
        Method::RelativeMahalanobisDistance => {
            let background = fit_or_missing(ctx.density.background, "background Gaussian")?;
            embedding_score(record, ctx.density.gaussian, |fit, x| density::relative_mahalanobis(fit, background, x))
        }
        Method::Rde => {
            let fit = fit_or_missing(ctx.density.rde, "RDE")?;
            density::rde_score(fit, density::record_embedding(record)?)
        }
        Method::PTrue => info::ptrue(record),
        Method::Ccp => claim::ccp_sequence(record, ctx.nli),
        Method::NumSemSets => Ok(diversity::num_semantic_sets(&diversity::cluster_bidirectional(&texts(), ctx.nli)?)),
        Method::EigValLaplacian(kind) => diversity::eigv_laplacian(&similarity_matrix(record, kind, ctx)?),
        Method::DegMat(kind) => Ok(diversity::degree_matrix_score(&similarity_matrix(record, kind, ctx)?)),
        Method::Eccentricity(kind) => diversity::eccentricity(&similarity_matrix(record, kind, ctx)?, &ctx.diversity),
        Method::LexicalSimilarityRougeL => diversity::lexical_similarity(&texts(), Lexical::RougeL),
        Method::LexicalSimilarityBleu => diversity::lexical_similarity(&texts(), Lexical::Bleu),
        Method::LabelProb => diversity::label_prob(&texts()),
        Method::BbSemanticEntropy => diversity::bb_semantic_entropy(&texts(), ctx.nli),
        Method::BbPTrue => diversity::bb_ptrue(count_true_answers(record), record.samples.len()),
        Method::VerbalizedConfidence => info::verbalized(record),
        Method::Huq => Err(Error::InvalidParameter("huq is computed over a whole dataset".into())),
        claim_method => Err(Error::InvalidParameter(format!("{claim_method} is a claim-level method"))),
    }
}

fn claim_value(
    method: Method,
    record: &GenerationRecord,
    claim: &crate::record::ClaimSpan,
    ctx: &ScoringContext<'_>,
) -> Result<f64> {
    let restricted = |base| claim::claim_restricted_score(record, claim, base);
    match method {
        Method::ClaimMaximumSequenceProbability => restricted(ClaimBase::Msp),
        Method::ClaimPerplexity => restricted(ClaimBase::Perplexity),
        Method::ClaimMeanTokenEntropy => restricted(ClaimBase::MeanEntropy),
        Method::ClaimMaxTokenEntropy => restricted(ClaimBase::MaxEntropy),
        Method::ClaimPointwiseMutualInformation => restricted(ClaimBase::Pmi),
        Method::ClaimPTrue => claim::claim_ptrue(claim),
        Method::ClaimCcp => claim::ccp_claim(record, claim, ctx.nli),
        other => Err(Error::InvalidParameter(format!("{other} is a sequence-level method"))),
    }
}

/// Scores one record: a single score for sequence-level methods, one per
/// claim for claim-level methods. Any failing claim fails the record.
pub fn score_record(
    method: Method,
    record: &GenerationRecord,
    ctx: &ScoringContext<'_>,
) -> Result<Vec<UncertaintyScore>> {
    let id = method.id();
    match method.level() {
        Level::Sequence => {
            let value = sequence_value(method, record, ctx)?;
            Ok(vec![UncertaintyScore {
                record_id: record.id.clone(),
                method: id,
                level: Level::Sequence,
                claim_id: None,
                value,
            }])
        }
        Level::Claim => record
            .claims
            .iter()
            .map(|c| {
                Ok(UncertaintyScore {
                    record_id: record.id.clone(),
                    method: id.clone(),
                    level: Level::Claim,
                    claim_id: Some(c.claim_id.clone()),
                    value: claim_value(method, record, c, ctx)?,
                })
            })
            .collect(),
    }
}
