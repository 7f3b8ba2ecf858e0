//! Run configuration: a TOML file, then the endpoint environment variable,
//! then command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uqbench_core::catalog::SimilarityKind;
use uqbench_core::density::{HuqParams, RdeParams};
use uqbench_core::diversity::DiversityParams;
use uqbench_core::info::InfoParams;
use uqbench_core::metrics::{TieBreak, DEFAULT_MAX_REJECTION};
use uqbench_core::{Method, NormalizerKind};

use crate::nli_client::{ClientConfig, ENDPOINT_ENV};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliBackend {
    /// Exact string match entails, anything else contradicts.
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NliConfig {
    pub provider: NliBackend,
    pub endpoint: String,
    pub timeout_secs: f64,
    pub max_inflight: usize,
    pub backoff_ms: u64,
}

impl Default for NliConfig {
    fn default() -> Self {
        let c = ClientConfig::default();
        Self {
            provider: NliBackend::default(),
            endpoint: c.endpoint,
            timeout_secs: c.timeout_secs,
            max_inflight: c.max_inflight,
            backoff_ms: c.backoff_ms,
        }
    }
}

impl NliConfig {
    pub fn client(&self) -> ClientConfig {
        ClientConfig {
            endpoint: self.endpoint.clone(),
            timeout_secs: self.timeout_secs,
            max_inflight: self.max_inflight,
            backoff_ms: self.backoff_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Records to score and evaluate.
    pub dataset_path: Option<PathBuf>,
    /// Split used to fit calibration models and density estimators.
    pub train_path: Option<PathBuf>,
    /// Out-of-domain embeddings for relative Mahalanobis distance.
    pub background_path: Option<PathBuf>,
    /// Precomputed similarity matrices for the `*_precomputed` methods.
    pub similarity_path: Option<PathBuf>,
    pub methods: Vec<String>,
    pub quality_metric: String,
    /// Similarity `g` used by the SAR family.
    pub sar_similarity: String,
    pub normalizers: Vec<String>,
    pub bins: usize,
    pub max_rejection: f64,
    pub tie_break: TieBreak,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Worker threads for scoring; `None` uses all cores.
    pub workers: Option<usize>,
    pub ridge: Option<f64>,
    pub info: InfoParams,
    pub diversity: DiversityParams,
    pub rde: RdeParams,
    pub huq: HuqParams,
    pub nli: NliConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_path: None,
            train_path: None,
            background_path: None,
            similarity_path: None,
            methods: Vec::new(),
            quality_metric: "rouge_l".into(),
            sar_similarity: "rouge_l".into(),
            normalizers: NormalizerKind::ALL.iter().map(|k| k.id().to_owned()).collect(),
            bins: uqbench_core::calibrate::DEFAULT_BINS,
            max_rejection: DEFAULT_MAX_REJECTION,
            tie_break: TieBreak::default(),
            output_dir: PathBuf::from("uqbench-out"),
            seed: 0,
            workers: None,
            ridge: None,
            info: InfoParams::default(),
            diversity: DiversityParams::default(),
            rde: RdeParams::default(),
            huq: HuqParams::default(),
            nli: NliConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path`, or starts from defaults when `None`, then applies the
    /// endpoint environment variable.
    pub fn load(path: Option<&Path>) -> Result<Self, Error> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        config.apply_env();
        Ok(config)
    }

    pub fn apply_env(&mut self) {
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            if !endpoint.is_empty() {
                self.nli.endpoint = endpoint;
            }
        }
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>, Error> {
        self.methods
            .iter()
            .map(|id| Method::from_id(id).ok_or_else(|| Error::Config(format!("unknown method id {id:?}"))))
            .collect()
    }

    pub fn parsed_normalizers(&self) -> Result<Vec<NormalizerKind>, Error> {
        self.normalizers
            .iter()
            .map(|id| NormalizerKind::from_id(id).ok_or_else(|| Error::Config(format!("unknown normalizer {id:?}"))))
            .collect()
    }

    pub fn sar_similarity_kind(&self) -> Result<SimilarityKind, Error> {
        match SimilarityKind::from_id(&self.sar_similarity) {
            Some(SimilarityKind::Precomputed) | None => {
                Err(Error::Config(format!("unsupported sar_similarity {:?}", self.sar_similarity)))
            }
            Some(kind) => Ok(kind),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.parsed_methods()?;
        self.parsed_normalizers()?;
        self.sar_similarity_kind()?;
        let core = |e: uqbench_core::Error| Error::Config(e.to_string());
        self.info.validate().map_err(core)?;
        self.diversity.validate().map_err(core)?;
        if !(self.max_rejection > 0.0 && self.max_rejection <= 1.0) {
            return Err(Error::Config("max_rejection must lie in (0, 1]".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.huq.alpha) {
            return Err(Error::Config("huq.alpha must lie in [0, 1]".into()));
        }
        if self.quality_metric.is_empty() {
            return Err(Error::Config("quality_metric is empty".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn scores_path(&self) -> PathBuf {
        self.output_dir.join("scores.jsonl")
    }

    pub fn train_scores_path(&self) -> PathBuf {
        self.output_dir.join("train_scores.jsonl")
    }

    pub fn models_path(&self) -> PathBuf {
        self.output_dir.join("models.json")
    }

    pub fn report_path(&self) -> PathBuf {
        self.output_dir.join("report.json")
    }

    pub fn report_text_path(&self) -> PathBuf {
        self.output_dir.join("report.txt")
    }
}
