use proptest::prelude::*;

use uqbench_core::calibrate::{fit_binned_pcc, fit_isotonic_pcc, fit_linear, fit_quantile, CalibrationModel};
use uqbench_core::density::{huq, HuqParams};
use uqbench_core::diversity::{
    degree_matrix_score, eccentricity, eigv_laplacian, mc_sequence_entropy, semantic_entropy, sentence_sar,
    DiversityParams,
};
use uqbench_core::linalg::Matrix;
use uqbench_core::metrics::{prr, roc_auc, TieBreak};
use uqbench_core::similarity::{ConstantNli, ConstantSimilarity};
use uqbench_core::{CalibrationPair, GenerationRecord, NliProbs, SampleResponse, SimilarityMatrix};

fn similarity_matrix(k: usize) -> impl Strategy<Value = SimilarityMatrix> {
    prop::collection::vec(0.05f64..1.0, k * k)
        .prop_map(move |raw| SimilarityMatrix::from_raw(Matrix::from_row_major(k, k, raw).unwrap()).unwrap())
}

fn matrix_and_perm() -> impl Strategy<Value = (SimilarityMatrix, Vec<usize>)> {
    (2usize..=6).prop_flat_map(|k| (similarity_matrix(k), Just((0..k).collect::<Vec<_>>()).prop_shuffle()))
}

fn distinct(values: &[f64]) -> bool {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).all(|w| w[0] != w[1])
}

fn record_with_samples(logprobs: &[f64]) -> GenerationRecord {
    let mut r = GenerationRecord::with_output("r", vec![]);
    r.samples = logprobs
        .iter()
        .enumerate()
        .map(|(i, lp)| SampleResponse { text: format!("answer {i}"), total_logprob: *lp, tokens: vec![] })
        .collect();
    r
}

proptest! {
    #[test]
    fn spectral_scores_are_permutation_invariant((s, perm) in matrix_and_perm()) {
        let p = s.permuted(&perm);
        let params = DiversityParams::default();
        prop_assert!((eigv_laplacian(&s).unwrap() - eigv_laplacian(&p).unwrap()).abs() < 1e-9);
        prop_assert!((degree_matrix_score(&s) - degree_matrix_score(&p)).abs() < 1e-12);
        let fixed = DiversityParams { eccentricity_k: Some(1), ..params };
        prop_assert!((eccentricity(&s, &fixed).unwrap() - eccentricity(&p, &fixed).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn spectral_scores_stay_in_range(s in (2usize..=6).prop_flat_map(similarity_matrix)) {
        let k = s.k() as f64;
        let eigv = eigv_laplacian(&s).unwrap();
        prop_assert!((-1e-9..=k + 1e-9).contains(&eigv));
        let deg = degree_matrix_score(&s);
        prop_assert!((-1e-12..=1.0 - 1.0 / k + 1e-12).contains(&deg));
    }

    #[test]
    fn semantic_entropy_without_entailment_is_mc_entropy(lps in prop::collection::vec(-20.0f64..0.0, 1..8)) {
        let r = record_with_samples(&lps);
        let p = DiversityParams::default();
        let se = semantic_entropy(&r, &ConstantNli(NliProbs::CONTRA), &p).unwrap();
        prop_assert!((se - mc_sequence_entropy(&r, &p).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn sentence_sar_approaches_mc_entropy_as_temperature_grows(
        lps in prop::collection::vec(-10.0f64..0.0, 2..6),
        g in 0.01f64..1.0,
    ) {
        let r = record_with_samples(&lps);
        let mc = mc_sequence_entropy(&r, &DiversityParams::default()).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for t in [1e-3, 1e-2, 1e-1, 1.0, 10.0, 1e3] {
            let p = DiversityParams { sar_temperature: t, ..Default::default() };
            let v = sentence_sar(&r, &ConstantSimilarity(g), &p).unwrap();
            prop_assert!(v >= prev - 1e-12);
            prop_assert!(v <= mc + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn prr_is_invariant_to_increasing_maps(
        data in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 4..60),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let u: Vec<f64> = data.iter().map(|d| d.0).collect();
        let q: Vec<f64> = data.iter().map(|d| d.1).collect();
        prop_assume!(distinct(&u));
        let affine: Vec<f64> = u.iter().map(|v| scale * v + shift).collect();
        prop_assume!(distinct(&affine));
        let exp_u: Vec<f64> = u.iter().map(|v| v.exp()).collect();
        let base = prr(&u, &q, 0.5, TieBreak::Average);
        prop_assume!(base.is_ok());
        let base = base.unwrap().prr;
        prop_assert_eq!(base, prr(&affine, &q, 0.5, TieBreak::Average).unwrap().prr);
        prop_assert_eq!(base, prr(&exp_u, &q, 0.5, TieBreak::Average).unwrap().prr);
    }

    #[test]
    fn oracle_prr_is_one_and_anti_oracle_non_positive(q in prop::collection::vec(0.0f64..1.0, 3..50)) {
        prop_assume!(distinct(&q));
        let oracle: Vec<f64> = q.iter().map(|v| -v).collect();
        prop_assert_eq!(prr(&oracle, &q, 1.0, TieBreak::Average).unwrap().prr, 1.0);
        prop_assert!(prr(&q, &q, 1.0, TieBreak::Average).unwrap().prr <= 1e-12);
    }

    #[test]
    fn roc_auc_is_antisymmetric(data in prop::collection::vec((-1.0f64..1.0, any::<bool>()), 2..40)) {
        let s: Vec<f64> = data.iter().map(|d| d.0).collect();
        let l: Vec<bool> = data.iter().map(|d| d.1).collect();
        prop_assume!(distinct(&s) && l.iter().any(|x| *x) && l.iter().any(|x| !*x));
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((roc_auc(&s, &l).unwrap() + roc_auc(&neg, &l).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huq_ranking_is_invariant_to_monotone_maps(
        data in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..30),
        alpha in 0.0f64..=1.0,
    ) {
        let a: Vec<f64> = data.iter().map(|d| d.0).collect();
        let b: Vec<f64> = data.iter().map(|d| d.1).collect();
        let a2: Vec<f64> = a.iter().map(|v| v.exp()).collect();
        let b2: Vec<f64> = b.iter().map(|v| 2.0 * v - 1.0).collect();
        prop_assume!(distinct(&a) == distinct(&a2) && distinct(&b) == distinct(&b2));
        let p = HuqParams { alpha };
        prop_assert_eq!(huq(&a, &b, &p).unwrap(), huq(&a2, &b2, &p).unwrap());
        let info_only = huq(&a, &b, &HuqParams { alpha: 0.0 }).unwrap();
        let ranks = huq(&a, &a, &p).unwrap();
        prop_assert!(info_only.iter().zip(&ranks).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn normalizers_are_bounded_and_monotone(
        data in prop::collection::vec((-2.0f64..2.0, 0.0f64..=1.0), 2..40),
        queries in prop::collection::vec(-3.0f64..3.0, 1..20),
    ) {
        let pairs: Vec<CalibrationPair> = data.iter().map(|d| CalibrationPair::new(d.0, d.1)).collect();
        prop_assume!(distinct(&data.iter().map(|d| d.0).collect::<Vec<_>>()));
        let mut sorted = queries.clone();
        sorted.sort_by(f64::total_cmp);
        let models: Vec<CalibrationModel> = vec![
            fit_linear(&pairs).unwrap(),
            fit_quantile(&pairs).unwrap(),
            fit_isotonic_pcc(&pairs).unwrap(),
        ];
        for m in &models {
            let c = m.apply_all(&sorted).unwrap();
            prop_assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(c.windows(2).all(|w| w[0] >= w[1]), "{:?}", m.kind());
        }
        if let CalibrationModel::IsotonicPcc { knots } = &models[2] {
            prop_assert!(knots.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 >= w[1].1));
        }
        let binned = fit_binned_pcc(&pairs, 2.min(pairs.len())).unwrap();
        prop_assert!(binned.apply_all(&queries).unwrap().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn eigv_counts_equal_size_blocks() {
    for (k, blocks) in [(4, 2), (6, 3), (6, 2), (5, 5), (4, 1)] {
        let size = k / blocks;
        let m = Matrix::from_fn(k, k, |i, j| if i / size == j / size { 1.0 } else { 0.0 });
        let s = SimilarityMatrix::new(m).unwrap();
        assert!((eigv_laplacian(&s).unwrap() - blocks as f64).abs() < 1e-9);
    }
}

#[test]
fn eigv_is_continuous_near_identity() {
    let k = 5;
    let m = Matrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { 1e-8 });
    let s = SimilarityMatrix::new(m).unwrap();
    assert!((eigv_laplacian(&s).unwrap() - k as f64).abs() < 1e-6);
}
