use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use uqbench::harness::{read_scores, run_calibrate, run_evaluate, run_score, FitOutcome, ScoreLine};
use uqbench::io::write_dataset;
use uqbench::synth::{generate, SynthSpec};
use uqbench::{stream_dataset, Error, RunConfig};
use uqbench_core::catalog::SimilarityKind;
use uqbench_core::density::fit_gaussian;
use uqbench_core::metrics::{calibration_mse, pr_auc, prr, roc_auc};
use uqbench_core::{info, ClaimLabel, GenerationRecord, Method};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/basic.jsonl")
}

fn config(dir: &Path, dataset: PathBuf, methods: &[&str]) -> RunConfig {
    RunConfig {
        dataset_path: Some(dataset),
        methods: methods.iter().map(|m| m.to_string()).collect(),
        output_dir: dir.join("out"),
        workers: Some(2),
        ..Default::default()
    }
}

fn write_synth(dir: &Path, name: &str, spec: SynthSpec) -> (PathBuf, Vec<GenerationRecord>) {
    let path = dir.join(name);
    let records = generate(&spec);
    write_dataset(&path, &records).unwrap();
    (path, records)
}

fn scores(path: &Path) -> Vec<ScoreLine> {
    read_scores(path).unwrap()
}

#[test]
fn msp_on_fixture_matches_direct_calls() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), fixture(), &["maximum_sequence_probability"]);
    let summary = run_score(&cfg).unwrap();
    assert_eq!((summary.test.records, summary.test.scores, summary.test.skips), (3, 3, 0));
    let lines = scores(&cfg.scores_path());
    let records: Vec<_> = stream_dataset(fixture()).unwrap().map(Result::unwrap).collect();
    for (line, record) in lines.iter().zip(&records) {
        match line {
            ScoreLine::Score(s) => {
                assert_eq!(s.record_id, record.id);
                assert_eq!(s.value, info::msp(record).unwrap());
            }
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn empty_method_list_gives_empty_score_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), fixture(), &[]);
    run_score(&cfg).unwrap();
    assert_eq!(std::fs::read(cfg.scores_path()).unwrap(), b"");
}

#[test]
fn ineligible_records_get_skip_entries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        fixture(),
        &["semantic_entropy", "claim_maximum_sequence_probability", "mahalanobis_distance", "huq"],
    );
    let summary = run_score(&cfg).unwrap();
    assert!(!summary.warnings.is_empty());
    let lines = scores(&cfg.scores_path());
    let skipped = |record: &str, method: &str| {
        lines.iter().any(|l| matches!(l, ScoreLine::Skip(s) if s.record_id == record && s.method == method))
    };
    // basic-3 has no samples and no claims; nothing has a density model
    assert!(skipped("basic-3", "semantic_entropy"));
    assert!(!skipped("basic-1", "semantic_entropy"));
    assert!(skipped("basic-3", "claim_maximum_sequence_probability"));
    assert!(skipped("basic-1", "mahalanobis_distance"));
    assert!(skipped("basic-2", "huq"));
    let claim_scores = lines
        .iter()
        .filter(|l| matches!(l, ScoreLine::Score(s) if s.method == "claim_maximum_sequence_probability"))
        .count();
    assert_eq!(claim_scores, 3);
}

#[test]
fn malformed_lines_do_not_abort_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mixed.jsonl");
    let good = std::fs::read_to_string(fixture()).unwrap();
    let mut lines: Vec<&str> = good.lines().collect();
    lines.insert(1, "{not json");
    lines.push(lines[0]);
    std::fs::write(&path, lines.join("\n")).unwrap();
    let cfg = config(dir.path(), path, &["perplexity"]);
    let summary = run_score(&cfg).unwrap();
    assert_eq!(summary.test.records, 3);
    assert_eq!(summary.test.bad_lines, 2);
    let out = scores(&cfg.scores_path());
    assert!(matches!(&out[1], ScoreLine::Skip(s) if s.record_id == "line 2" && s.method == "*"));
    assert!(matches!(&out[4], ScoreLine::Skip(s) if s.skipped.contains("duplicate")));
}

#[test]
fn every_catalog_method_is_invocable() {
    let dir = tempfile::tempdir().unwrap();
    let (test, _) = write_synth(dir.path(), "test.jsonl", SynthSpec { n: 6, seed: 1, ..Default::default() });
    let (train, _) = write_synth(dir.path(), "train.jsonl", SynthSpec { n: 30, seed: 2, ..Default::default() });
    let all: Vec<String> = Method::all().iter().map(Method::id).collect();
    let ids: BTreeSet<&str> = all.iter().map(String::as_str).collect();
    assert_eq!(ids.len(), all.len());
    for expected in
        ["eigval_laplacian_nli_entail", "degmat_jaccard", "eccentricity_nli_contra", "semantic_entropy", "claim_ccp"]
    {
        assert!(ids.contains(expected), "{expected}");
    }
    let mut cfg = config(dir.path(), test, &[]);
    cfg.methods = all.clone();
    cfg.train_path = Some(train.clone());
    cfg.background_path = Some(train);
    run_score(&cfg).unwrap();
    let lines = scores(&cfg.scores_path());
    for id in &all {
        let scored = lines.iter().any(|l| matches!(l, ScoreLine::Score(s) if &s.method == id));
        let precomputed = id.ends_with(SimilarityKind::Precomputed.id());
        assert_eq!(scored, !precomputed, "{id}");
    }
}

#[test]
fn report_reproduces_direct_library_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (test, test_records) =
        write_synth(dir.path(), "test.jsonl", SynthSpec { n: 120, seed: 5, ..Default::default() });
    let (train, train_records) =
        write_synth(dir.path(), "train.jsonl", SynthSpec { n: 150, seed: 6, ..Default::default() });
    let mut cfg =
        config(dir.path(), test, &["maximum_sequence_probability", "mahalanobis_distance", "claim_perplexity"]);
    cfg.train_path = Some(train);
    run_score(&cfg).unwrap();
    let models = run_calibrate(&cfg).unwrap();
    let report = run_evaluate(&cfg).unwrap();

    let q: Vec<f64> = test_records.iter().map(|r| r.quality["rouge_l"]).collect();
    let msp: Vec<f64> = test_records.iter().map(|r| info::msp(r).unwrap()).collect();
    let direct = prr(&msp, &q, cfg.max_rejection, cfg.tie_break).unwrap();
    let m = report.method("maximum_sequence_probability").unwrap();
    assert_eq!(m.prr.as_ref().unwrap().prr, direct.prr);
    assert_eq!(m.prr.as_ref().unwrap().curve, direct.curve.points);

    let train_u: Vec<f64> = train_records.iter().map(|r| info::msp(r).unwrap()).collect();
    let pairs: Vec<_> = train_u
        .iter()
        .zip(&train_records)
        .map(|(u, r)| uqbench_core::CalibrationPair::new(*u, r.quality["rouge_l"]))
        .collect();
    let iso = uqbench_core::calibrate::fit_isotonic_pcc(&pairs).unwrap();
    assert_eq!(models.methods["maximum_sequence_probability"]["isotonic_pcc"], FitOutcome::Model(iso.clone()));
    let mse = calibration_mse(&iso.apply_all(&msp).unwrap(), &q).unwrap();
    assert_eq!(m.calibration_mse["isotonic_pcc"], mse);

    let embeddings: Vec<Vec<f64>> = train_records.iter().filter_map(|r| r.embedding.clone()).collect();
    let fit = fit_gaussian(&embeddings, None).unwrap();
    let md: Vec<f64> = test_records
        .iter()
        .map(|r| uqbench_core::density::mahalanobis(&fit, r.embedding.as_deref().unwrap()).unwrap())
        .collect();
    let direct_md = prr(&md, &q, cfg.max_rejection, cfg.tie_break).unwrap();
    assert_eq!(report.method("mahalanobis_distance").unwrap().prr.as_ref().unwrap().prr, direct_md.prr);

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for r in &test_records {
        for c in &r.claims {
            if c.label == ClaimLabel::Unknown {
                continue;
            }
            let claim_score =
                uqbench_core::claim::claim_restricted_score(r, c, uqbench_core::claim::ClaimBase::Perplexity).unwrap();
            values.push(claim_score);
            labels.push(c.label == ClaimLabel::Unsupported);
        }
    }
    let claims = report.method("claim_perplexity").unwrap();
    assert_eq!(claims.roc_auc, Some(roc_auc(&values, &labels).unwrap()));
    assert_eq!(claims.pr_auc, Some(pr_auc(&values, &labels).unwrap()));
}

#[test]
fn planted_correlation_gives_perfect_prr() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec { n: 300, seed: 7, correlation: 1.0, noise: 0.0, ..Default::default() };
    let (test, _) = write_synth(dir.path(), "test.jsonl", spec);
    let cfg = config(dir.path(), test, &["maximum_sequence_probability", "perplexity"]);
    run_score(&cfg).unwrap();
    std::fs::remove_file(cfg.models_path()).ok();
    let report = run_evaluate(&cfg).unwrap();
    assert_eq!(report.method("maximum_sequence_probability").unwrap().prr.as_ref().unwrap().prr, 1.0);
    assert!(report.method("perplexity").unwrap().prr.as_ref().unwrap().prr < 1.0);
}

#[test]
fn refitting_identical_data_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (test, _) = write_synth(dir.path(), "test.jsonl", SynthSpec { n: 50, seed: 8, ..Default::default() });
    let (train, _) = write_synth(dir.path(), "train.jsonl", SynthSpec { n: 80, seed: 9, ..Default::default() });
    let mut cfg = config(dir.path(), test, &["maximum_sequence_probability", "sar", "fisher_rao"]);
    cfg.train_path = Some(train);
    run_score(&cfg).unwrap();
    run_calibrate(&cfg).unwrap();
    let first = std::fs::read(cfg.models_path()).unwrap();
    run_calibrate(&cfg).unwrap();
    assert_eq!(std::fs::read(cfg.models_path()).unwrap(), first);
}

#[test]
fn missing_quality_metric_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), fixture(), &["maximum_sequence_probability"]);
    cfg.train_path = Some(fixture());
    cfg.quality_metric = "alignscore".into();
    run_score(&cfg).unwrap();
    assert!(matches!(run_calibrate(&cfg), Err(Error::Validation(_))));
    assert!(matches!(run_evaluate(&cfg), Err(Error::Validation(_))));
}

#[test]
fn single_class_claims_are_flagged_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = generate(&SynthSpec { n: 20, seed: 4, ..Default::default() });
    for r in &mut records {
        for c in &mut r.claims {
            c.label = ClaimLabel::Supported;
        }
    }
    let path = dir.path().join("supported.jsonl");
    write_dataset(&path, &records).unwrap();
    let cfg = config(dir.path(), path, &["claim_maximum_sequence_probability", "maximum_sequence_probability"]);
    run_score(&cfg).unwrap();
    let report = run_evaluate(&cfg).unwrap();
    let claims = report.method("claim_maximum_sequence_probability").unwrap();
    assert!(claims.roc_auc.is_none());
    assert!(claims.errors.iter().any(|e| e.contains("single class")), "{:?}", claims.errors);
    assert!(report.method("maximum_sequence_probability").unwrap().prr.is_some());
}

#[test]
fn degenerate_quality_is_reported_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = generate(&SynthSpec { n: 10, seed: 4, ..Default::default() });
    for r in &mut records {
        r.quality.insert("rouge_l".into(), 0.5);
    }
    let path = dir.path().join("flat.jsonl");
    write_dataset(&path, &records).unwrap();
    let cfg = config(dir.path(), path, &["maximum_sequence_probability"]);
    run_score(&cfg).unwrap();
    let report = run_evaluate(&cfg).unwrap();
    let m = report.method("maximum_sequence_probability").unwrap();
    assert!(m.prr.is_none());
    assert_eq!(m.errors.len(), 1);
    assert!(report.render_table().contains("maximum_sequence_probability: prr"));
}

#[test]
fn score_without_dataset_is_a_config_error() {
    let cfg = RunConfig { methods: vec!["perplexity".into()], ..Default::default() };
    assert!(matches!(run_score(&cfg), Err(Error::Config(_))));
}
