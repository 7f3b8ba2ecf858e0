//! The score → calibrate → evaluate pipeline.
//!
//! Every stage reads its inputs from the paths in [`RunConfig`] and writes
//! its outputs under `output_dir` atomically. A record or method that cannot
//! be handled is reported in the output and the run continues; only
//! configuration, IO and validation problems abort a stage.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uqbench_core::calibrate::{self, CalibrationModel};
use uqbench_core::catalog::{score_record, DensityFits, MatrixStore, ScoringContext, SimilarityKind};
use uqbench_core::density::{self, fit_gaussian, fit_rde, GaussianFit, RdeFit};
use uqbench_core::info;
use uqbench_core::metrics::{calibration_mse, pr_auc, prr, roc_auc};
use uqbench_core::similarity::{Lexical, NliMode, NliSimilarity, StubNli};
use uqbench_core::{
    CalibrationPair, ClaimLabel, GenerationRecord, Level, Method, NliProbs, NliProvider, ProviderError, TextSimilarity,
    UncertaintyScore,
};

use crate::cache::CachedNli;
use crate::config::{NliBackend, RunConfig};
use crate::io::{stream_dataset, AtomicFile, DatasetError};
use crate::nli_client::HttpNliClient;
use crate::precomputed::PrecomputedMatrices;
use crate::report::{EvalReport, MethodReport, PrrSummary};
use crate::Error;

/// Records scored per parallel batch; bounds memory while streaming.
const CHUNK: usize = 256;

pub enum Backend {
    Stub(StubNli),
    Http(Box<HttpNliClient>),
}

impl NliProvider for Backend {
    fn nli_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<NliProbs>, ProviderError> {
        match self {
            Backend::Stub(p) => p.nli_batch(pairs),
            Backend::Http(p) => p.nli_batch(pairs),
        }
    }

    fn model_id(&self) -> &str {
        match self {
            Backend::Stub(p) => p.model_id(),
            Backend::Http(p) => p.model_id(),
        }
    }
}

pub fn build_nli(config: &RunConfig) -> CachedNli<Backend> {
    CachedNli::new(match config.nli.provider {
        NliBackend::Stub => Backend::Stub(StubNli),
        NliBackend::Http => Backend::Http(Box::new(HttpNliClient::new(config.nli.client()))),
    })
}

enum SarSimilarity<'a> {
    Lexical(Lexical),
    Nli(NliSimilarity<&'a CachedNli<Backend>>),
}

impl TextSimilarity for SarSimilarity<'_> {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, ProviderError> {
        match self {
            SarSimilarity::Lexical(l) => l.similarity(a, b),
            SarSimilarity::Nli(n) => n.similarity(a, b),
        }
    }

    fn similarity_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, ProviderError> {
        match self {
            SarSimilarity::Lexical(l) => l.similarity_batch(pairs),
            SarSimilarity::Nli(n) => n.similarity_batch(pairs),
        }
    }
}

/// Explicit record of a record/method pair that produced no score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub record_id: String,
    pub method: String,
    pub skipped: String,
}

/// One line of a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreLine {
    Score(UncertaintyScore),
    Skip(SkipEntry),
}

impl ScoreLine {
    pub fn method(&self) -> &str {
        match self {
            ScoreLine::Score(s) => &s.method,
            ScoreLine::Skip(s) => &s.method,
        }
    }

    fn skip(record_id: impl Into<String>, method: impl Into<String>, reason: impl Into<String>) -> Self {
        ScoreLine::Skip(SkipEntry { record_id: record_id.into(), method: method.into(), skipped: reason.into() })
    }
}

/// Marker used as the method of a skip entry for an unparseable line.
pub const ANY_METHOD: &str = "*";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SplitSummary {
    pub records: usize,
    pub scores: usize,
    pub skips: usize,
    pub bad_lines: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ScoreSummary {
    pub test: SplitSummary,
    pub train: Option<SplitSummary>,
    /// Non-fatal problems, such as a density model that could not be fitted.
    pub warnings: Vec<String>,
}

fn required<'a>(path: &'a Option<std::path::PathBuf>, what: &str) -> Result<&'a Path, Error> {
    path.as_deref().ok_or_else(|| Error::Config(format!("{what} is not set")))
}

fn open_dataset(path: &Path) -> Result<crate::io::DatasetStream<std::io::BufReader<std::fs::File>>, Error> {
    stream_dataset(path).map_err(|e| Error::io(path, e))
}

/// Embeddings of every parseable record that has one.
fn load_embeddings(path: &Path) -> Result<Vec<Vec<f64>>, Error> {
    let mut out = Vec::new();
    for item in open_dataset(path)? {
        match item {
            Ok(r) => out.extend(r.embedding),
            Err(DatasetError::Io { source, .. }) => return Err(Error::io(path, source)),
            Err(DatasetError::Parse { .. }) => {}
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Fits {
    gaussian: Option<GaussianFit>,
    background: Option<GaussianFit>,
    rde: Option<RdeFit>,
}

fn fit_density(config: &RunConfig, methods: &[Method], warnings: &mut Vec<String>) -> Result<Fits, Error> {
    let mut fits = Fits::default();
    let needs = |m: &Method| m.uses_density() || *m == Method::Huq;
    if !methods.iter().any(needs) {
        return Ok(fits);
    }
    let Some(train) = config.train_path.as_deref() else {
        warnings.push("density methods need train_path; they will be skipped".into());
        return Ok(fits);
    };
    let embeddings = load_embeddings(train)?;
    match fit_gaussian(&embeddings, config.ridge) {
        Ok(f) => fits.gaussian = Some(f),
        Err(e) => warnings.push(format!("Gaussian fit on {}: {e}", train.display())),
    }
    if methods.contains(&Method::Rde) {
        let params = density::RdeParams { seed: config.seed, ..config.rde };
        match fit_rde(&embeddings, &params) {
            Ok(f) => fits.rde = Some(f),
            Err(e) => warnings.push(format!("RDE fit on {}: {e}", train.display())),
        }
    }
    if methods.contains(&Method::RelativeMahalanobisDistance) {
        match config.background_path.as_deref() {
            Some(bg) => match fit_gaussian(&load_embeddings(bg)?, config.ridge) {
                Ok(f) => fits.background = Some(f),
                Err(e) => warnings.push(format!("background fit on {}: {e}", bg.display())),
            },
            None => warnings.push("relative_mahalanobis_distance needs background_path".into()),
        }
    }
    Ok(fits)
}

/// Inputs to the dataset-level HUQ pass for one record.
struct HuqInput {
    record_id: String,
    info: Result<f64, String>,
    density: Result<f64, String>,
}

fn score_one(
    record: &GenerationRecord,
    methods: &[Method],
    ctx: &ScoringContext<'_>,
    huq: bool,
) -> (Vec<ScoreLine>, Option<HuqInput>) {
    let mut lines = Vec::new();
    for &method in methods {
        if method == Method::Huq {
            continue;
        }
        let id = method.id();
        if method.level() == Level::Claim && record.claims.is_empty() {
            lines.push(ScoreLine::skip(&record.id, id, "record has no claims"));
            continue;
        }
        match score_record(method, record, ctx) {
            Ok(scores) => {
                if let Some(bad) = scores.iter().find(|s| !s.value.is_finite()) {
                    lines.push(ScoreLine::skip(&record.id, id, format!("non-finite score {}", bad.value)));
                } else {
                    lines.extend(scores.into_iter().map(ScoreLine::Score));
                }
            }
            Err(e) => lines.push(ScoreLine::skip(&record.id, id, e.to_string())),
        }
    }
    let huq = huq.then(|| HuqInput {
        record_id: record.id.clone(),
        info: info::msp(record).map_err(|e| e.to_string()),
        density: match ctx.density.gaussian {
            Some(fit) => {
                density::record_embedding(record).and_then(|x| density::mahalanobis(fit, x)).map_err(|e| e.to_string())
            }
            None => Err("no fitted Gaussian model".into()),
        },
    });
    (lines, huq)
}

fn write_line(out: &mut AtomicFile, path: &Path, line: &ScoreLine) -> Result<(), Error> {
    let text = serde_json::to_string(line).map_err(|e| Error::format(path, e))?;
    writeln!(out, "{text}").map_err(|e| Error::io(path, e))
}

fn huq_lines(inputs: Vec<HuqInput>, config: &RunConfig) -> Vec<ScoreLine> {
    let id = Method::Huq.id();
    let usable: Vec<(usize, f64, f64)> = inputs
        .iter()
        .enumerate()
        .filter_map(|(i, h)| Some((i, *h.info.as_ref().ok()?, *h.density.as_ref().ok()?)))
        .collect();
    let info: Vec<f64> = usable.iter().map(|u| u.1).collect();
    let dens: Vec<f64> = usable.iter().map(|u| u.2).collect();
    let values = if usable.is_empty() { Ok(Vec::new()) } else { density::huq(&info, &dens, &config.huq) };
    let mut by_index: HashMap<usize, f64> = HashMap::new();
    let mut failure = None;
    match values {
        Ok(v) => by_index.extend(usable.iter().map(|u| u.0).zip(v)),
        Err(e) => failure = Some(e.to_string()),
    }
    inputs
        .into_iter()
        .enumerate()
        .map(|(i, h)| match (by_index.get(&i), &failure, h.info, h.density) {
            (Some(v), _, _, _) => ScoreLine::Score(UncertaintyScore {
                record_id: h.record_id,
                method: id.clone(),
                level: Level::Sequence,
                claim_id: None,
                value: *v,
            }),
            (None, Some(f), _, _) => ScoreLine::skip(h.record_id, id.clone(), f.clone()),
            (None, None, Err(e), _) | (None, None, _, Err(e)) => ScoreLine::skip(h.record_id, id.clone(), e),
            (None, None, Ok(_), Ok(_)) => unreachable!("usable records always get a value"),
        })
        .collect()
}

fn score_split(
    input: &Path,
    output: &Path,
    methods: &[Method],
    ctx: &ScoringContext<'_>,
    pool: &rayon::ThreadPool,
    config: &RunConfig,
) -> Result<SplitSummary, Error> {
    let mut summary = SplitSummary::default();
    let mut out = AtomicFile::create(output).map_err(|e| Error::io(output, e))?;
    let huq = methods.contains(&Method::Huq);
    let mut huq_inputs = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut stream = open_dataset(input)?;
    loop {
        let chunk: Vec<_> = stream.by_ref().take(CHUNK).collect();
        if chunk.is_empty() {
            break;
        }
        let mut records = Vec::with_capacity(chunk.len());
        let mut slots: Vec<Result<usize, ScoreLine>> = Vec::with_capacity(chunk.len());
        for item in chunk {
            match item {
                Ok(r) if !seen.insert(r.id.clone()) => {
                    slots.push(Err(ScoreLine::skip(&r.id, ANY_METHOD, "duplicate record id")));
                }
                Ok(r) => {
                    slots.push(Ok(records.len()));
                    records.push(r);
                }
                Err(DatasetError::Io { source, .. }) => return Err(Error::io(input, source)),
                Err(e @ DatasetError::Parse { .. }) => {
                    slots.push(Err(ScoreLine::skip(format!("line {}", e.line()), ANY_METHOD, e.to_string())));
                }
            }
        }
        let scored: Vec<(Vec<ScoreLine>, Option<HuqInput>)> =
            pool.install(|| records.par_iter().map(|r| score_one(r, methods, ctx, huq)).collect());
        let mut scored = scored.into_iter();
        for slot in slots {
            let lines = match slot {
                Ok(_) => {
                    summary.records += 1;
                    let (lines, h) = scored.next().expect("one result per record");
                    huq_inputs.extend(h);
                    lines
                }
                Err(line) => {
                    summary.bad_lines += 1;
                    vec![line]
                }
            };
            for line in &lines {
                match line {
                    ScoreLine::Score(_) => summary.scores += 1,
                    ScoreLine::Skip(_) => summary.skips += 1,
                }
                write_line(&mut out, output, line)?;
            }
        }
    }
    for line in huq_lines(huq_inputs, config) {
        match line {
            ScoreLine::Score(_) => summary.scores += 1,
            ScoreLine::Skip(_) => summary.skips += 1,
        }
        write_line(&mut out, output, &line)?;
    }
    out.commit().map_err(|e| Error::io(output, e))?;
    Ok(summary)
}

/// Scores the dataset into `scores.jsonl`, and the train split, when set,
/// into `train_scores.jsonl`.
pub fn run_score(config: &RunConfig) -> Result<ScoreSummary, Error> {
    config.validate()?;
    let dataset = required(&config.dataset_path, "dataset_path")?;
    let methods = config.parsed_methods()?;
    let mut summary = ScoreSummary::default();

    let fits = fit_density(config, &methods, &mut summary.warnings)?;
    let matrices = match &config.similarity_path {
        Some(p) => Some(PrecomputedMatrices::load(p).map_err(|e| Error::format(p, e))?),
        None => None,
    };
    let nli = build_nli(config);
    let sar = match config.sar_similarity_kind()? {
        SimilarityKind::NliEntail => SarSimilarity::Nli(NliSimilarity { provider: &nli, mode: NliMode::Entail }),
        SimilarityKind::NliContra => SarSimilarity::Nli(NliSimilarity { provider: &nli, mode: NliMode::Contra }),
        lexical => SarSimilarity::Lexical(lexical.lexical().unwrap_or(Lexical::RougeL)),
    };
    let ctx = ScoringContext {
        info: config.info,
        diversity: config.diversity,
        nli: &nli,
        sar_similarity: &sar,
        matrices: matrices.as_ref().map(|m| m as &(dyn MatrixStore + Sync)),
        density: DensityFits {
            gaussian: fits.gaussian.as_ref(),
            background: fits.background.as_ref(),
            rde: fits.rde.as_ref(),
        },
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    summary.test = score_split(dataset, &config.scores_path(), &methods, &ctx, &pool, config)?;
    if let Some(train) = config.train_path.as_deref() {
        summary.train = Some(score_split(train, &config.train_scores_path(), &methods, &ctx, &pool, config)?);
    }
    Ok(summary)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreLine>, Error> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// Per-record ground truth needed by calibration and evaluation.
#[derive(Default)]
struct Truth {
    records: usize,
    quality: HashMap<String, f64>,
    labels: HashMap<(String, String), ClaimLabel>,
}

fn load_truth(path: &Path, metric: &str) -> Result<Truth, Error> {
    let mut truth = Truth::default();
    for item in open_dataset(path)? {
        let record = match item {
            Ok(r) => r,
            Err(DatasetError::Io { source, .. }) => return Err(Error::io(path, source)),
            Err(DatasetError::Parse { .. }) => continue,
        };
        let q = *record.quality.get(metric).ok_or_else(|| {
            Error::Validation(format!("{}: record {} has no quality metric {metric:?}", path.display(), record.id))
        })?;
        truth.records += 1;
        for claim in &record.claims {
            truth.labels.insert((record.id.clone(), claim.claim_id.clone()), claim.label);
        }
        truth.quality.insert(record.id, q);
    }
    Ok(truth)
}

/// Outcome of fitting one normalizer for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitOutcome {
    Model(CalibrationModel),
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub quality_metric: String,
    pub bins: usize,
    /// method id → normalizer id → fitted model or error.
    pub methods: BTreeMap<String, BTreeMap<String, FitOutcome>>,
}

/// Fits every configured normalizer for every sequence-level method on the
/// train split and writes `models.json`.
pub fn run_calibrate(config: &RunConfig) -> Result<ModelFile, Error> {
    config.validate()?;
    let train = required(&config.train_path, "train_path")?;
    let normalizers = config.parsed_normalizers()?;
    let truth = load_truth(train, &config.quality_metric)?;
    let mut pairs: BTreeMap<String, Vec<CalibrationPair>> = BTreeMap::new();
    for line in read_scores(&config.train_scores_path())? {
        if let ScoreLine::Score(s) = line {
            if s.level != Level::Sequence {
                continue;
            }
            if let Some(q) = truth.quality.get(&s.record_id) {
                pairs.entry(s.method).or_default().push(CalibrationPair::new(s.value, *q));
            }
        }
    }
    let methods = pairs
        .into_iter()
        .map(|(method, pairs)| {
            let fitted = normalizers
                .iter()
                .map(|&kind| {
                    let outcome = match calibrate::fit(kind, &pairs, config.bins) {
                        Ok(m) => FitOutcome::Model(m),
                        Err(e) => FitOutcome::Error(e.to_string()),
                    };
                    (kind.id().to_owned(), outcome)
                })
                .collect();
            (method, fitted)
        })
        .collect();
    let file = ModelFile { quality_metric: config.quality_metric.clone(), bins: config.bins, methods };
    let path = config.models_path();
    crate::io::write_json(&path, &file).map_err(|e| Error::io(&path, e))?;
    Ok(file)
}

pub fn read_models(path: &Path) -> Result<ModelFile, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

fn evaluate_sequence(
    report: &mut MethodReport,
    scores: &[&UncertaintyScore],
    truth: &Truth,
    models: Option<&BTreeMap<String, FitOutcome>>,
    config: &RunConfig,
) {
    let (u, q): (Vec<f64>, Vec<f64>) =
        scores.iter().filter_map(|s| Some((s.value, *truth.quality.get(&s.record_id)?))).unzip();
    report.scored = u.len();
    match prr(&u, &q, config.max_rejection, config.tie_break) {
        Ok(r) => report.prr = Some(PrrSummary::from(r)),
        Err(e) => report.errors.push(format!("prr: {e}")),
    }
    for (normalizer, outcome) in models.into_iter().flatten() {
        match outcome {
            FitOutcome::Model(model) => match model.apply_all(&u).and_then(|c| calibration_mse(&c, &q)) {
                Ok(mse) => {
                    report.calibration_mse.insert(normalizer.clone(), mse);
                }
                Err(e) => report.errors.push(format!("{normalizer}: {e}")),
            },
            FitOutcome::Error(e) => report.errors.push(format!("{normalizer} fit: {e}")),
        }
    }
}

fn evaluate_claims(report: &mut MethodReport, scores: &[&UncertaintyScore], truth: &Truth) {
    let mut values = Vec::new();
    let mut positives = Vec::new();
    for s in scores {
        let key = (s.record_id.clone(), s.claim_id.clone().unwrap_or_default());
        match truth.labels.get(&key) {
            Some(ClaimLabel::Supported) => positives.push(false),
            Some(ClaimLabel::Unsupported) => positives.push(true),
            Some(ClaimLabel::Unknown) | None => continue,
        }
        values.push(s.value);
    }
    report.scored = values.len();
    match roc_auc(&values, &positives) {
        Ok(v) => report.roc_auc = Some(v),
        Err(e) => report.errors.push(format!("roc_auc: {e}")),
    }
    match pr_auc(&values, &positives) {
        Ok(v) => report.pr_auc = Some(v),
        Err(e) => report.errors.push(format!("pr_auc: {e}")),
    }
}

/// Evaluates `scores.jsonl` against the dataset, using `models.json` when it
/// exists, and writes `report.json` and `report.txt`.
pub fn run_evaluate(config: &RunConfig) -> Result<EvalReport, Error> {
    config.validate()?;
    let dataset = required(&config.dataset_path, "dataset_path")?;
    let truth = load_truth(dataset, &config.quality_metric)?;
    let lines = read_scores(&config.scores_path())?;
    let models_path = config.models_path();
    let models = if models_path.exists() { Some(read_models(&models_path)?) } else { None };
    if let Some(m) = &models {
        if m.quality_metric != config.quality_metric {
            return Err(Error::Validation(format!(
                "models were fitted on {:?}, evaluation uses {:?}",
                m.quality_metric, config.quality_metric
            )));
        }
    }

    let mut method_reports = Vec::new();
    for method in config.parsed_methods()? {
        let id = method.id();
        let mut report = MethodReport::new(id.clone(), method.level());
        let mut scores = Vec::new();
        for line in lines.iter().filter(|l| l.method() == id) {
            match line {
                ScoreLine::Score(s) => scores.push(s),
                ScoreLine::Skip(_) => report.skipped += 1,
            }
        }
        match method.level() {
            Level::Sequence => {
                let fitted = models.as_ref().and_then(|m| m.methods.get(&id));
                evaluate_sequence(&mut report, &scores, &truth, fitted, config);
            }
            Level::Claim => evaluate_claims(&mut report, &scores, &truth),
        }
        method_reports.push(report);
    }
    let report = EvalReport {
        quality_metric: config.quality_metric.clone(),
        max_rejection: config.max_rejection,
        tie_break: config.tie_break,
        records: truth.records,
        rejected_lines: lines.iter().filter(|l| l.method() == ANY_METHOD).count(),
        methods: method_reports,
    };
    let json_path = config.report_path();
    crate::io::write_json(&json_path, &report).map_err(|e| Error::io(&json_path, e))?;
    let text_path = config.report_text_path();
    crate::io::write_atomic(&text_path, report.render_table().as_bytes()).map_err(|e| Error::io(&text_path, e))?;
    Ok(report)
}
