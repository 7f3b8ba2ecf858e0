//! Cross-checks against independent implementations: nalgebra for the dense
//! linear algebra, and direct pairwise enumeration for the ranking metrics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uqbench_core::density::{fit_gaussian, fit_rde, mahalanobis, pca_projection, rde_score, RdeParams};
use uqbench_core::diversity::{eccentricity, eigv_laplacian, normalized_laplacian, DiversityParams};
use uqbench_core::linalg::Matrix;
use uqbench_core::metrics::{pr_auc, roc_auc};
use uqbench_core::SimilarityMatrix;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

fn random_similarity(rng: &mut ChaCha8Rng, k: usize) -> SimilarityMatrix {
    let raw = Matrix::from_fn(k, k, |_, _| rng.random_range(0.01..1.0));
    SimilarityMatrix::from_raw(raw).unwrap()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
}

#[test]
fn laplacian_spectrum_matches_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 2..=6 {
        for _ in 0..20 {
            let s = random_similarity(&mut rng, k);
            let l = to_na(&normalized_laplacian(&s).unwrap());
            let expected: f64 = SymmetricEigen::new(l).eigenvalues.iter().map(|v| (1.0 - v).max(0.0)).sum();
            assert!((eigv_laplacian(&s).unwrap() - expected).abs() < 1e-8);
        }
    }
}

#[test]
fn eccentricity_matches_nalgebra_subspace() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 3..=6 {
        for dims in 1..k {
            let s = random_similarity(&mut rng, k);
            let eig = SymmetricEigen::new(to_na(&normalized_laplacian(&s).unwrap()));
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let mut sum = 0.0;
            for &c in &order[..dims] {
                let col = eig.eigenvectors.column(c);
                let mean = col.mean();
                sum += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            }
            let params = DiversityParams { eccentricity_k: Some(dims), ..Default::default() };
            assert!((eccentricity(&s, &params).unwrap() - sum.sqrt()).abs() < 1e-8);
        }
    }
}

#[test]
fn eccentricity_on_identity_is_brute_force_norm() {
    // L = 0: every basis is an eigenbasis, and the Jacobi solver keeps the
    // standard one, whose centered columns each have squared norm (K-1)/K.
    for k in 2..=5usize {
        for dims in 1..=k {
            let params = DiversityParams { eccentricity_k: Some(dims), ..Default::default() };
            let v = eccentricity(&SimilarityMatrix::identity(k), &params).unwrap();
            let expected = (dims as f64 * (k as f64 - 1.0) / k as f64).sqrt();
            assert!((v - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn gaussian_fit_matches_two_pass_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for d in 1..=5 {
        let pts = random_points(&mut rng, 3 * d + 4, d);
        let fit = fit_gaussian(&pts, Some(0.0)).unwrap();
        let n = pts.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n).collect();
        for j in 0..d {
            assert!((fit.mean[j] - mean[j]).abs() < 1e-10);
            for l in 0..d {
                let c = pts.iter().map(|p| (p[j] - mean[j]) * (p[l] - mean[l])).sum::<f64>() / n;
                assert!((fit.covariance[(j, l)] - c).abs() < 1e-10);
            }
        }
        let id = to_na(&fit.precision) * to_na(&fit.covariance);
        assert!((id - DMatrix::identity(d, d)).abs().max() < 1e-6);
    }
}

#[test]
fn mahalanobis_matches_explicit_inverse_and_whitening() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for d in 1..=5 {
        let pts = random_points(&mut rng, 4 * d + 3, d);
        let fit = fit_gaussian(&pts, None).unwrap();
        let cov = to_na(&fit.covariance);
        let inv = cov.clone().try_inverse().unwrap();
        let chol = cov.cholesky().unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..4.0)).collect();
            let diff = DVector::from_iterator(d, x.iter().zip(&fit.mean).map(|(a, m)| a - m));
            let explicit = (diff.transpose() * &inv * &diff)[(0, 0)];
            let whitened = chol.l().solve_lower_triangular(&diff).unwrap().norm_squared();
            let ours = mahalanobis(&fit, &x).unwrap();
            assert!((ours - explicit).abs() < 1e-8 * explicit.max(1.0));
            assert!((ours - whitened).abs() < 1e-8 * whitened.max(1.0));
        }
    }
}

#[test]
fn pca_projection_matches_top_eigenvectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let d = 5;
    let pts = random_points(&mut rng, 40, d);
    let n = pts.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(d, d, |a, b| pts.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / n);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let r = 3;
    let proj = pca_projection(&pts, r).unwrap();
    for (c, &col) in order[..r].iter().enumerate() {
        let expected = eig.eigenvectors.column(col);
        let dot: f64 = (0..d).map(|i| proj[(i, c)] * expected[i]).sum();
        let sign = dot.signum();
        for i in 0..d {
            assert!((proj[(i, c)] - sign * expected[i]).abs() < 1e-6);
        }
    }
}

#[test]
fn full_rank_untrimmed_rde_is_mahalanobis() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for d in 1..=5 {
        let pts = random_points(&mut rng, 5 * d + 2, d);
        let plain = fit_gaussian(&pts, None).unwrap();
        let params = RdeParams { rank: Some(d), mcd_fraction: 1.0, ..Default::default() };
        let rde = fit_rde(&pts, &params).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..4.0)).collect();
            let a = mahalanobis(&plain, &x).unwrap();
            assert!((a - rde_score(&rde, &x).unwrap()).abs() < 1e-8 * a.max(1.0));
        }
    }
}

fn brute_roc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                credit += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    credit / pairs
}

/// AP from the distinct-threshold definition: each threshold t predicts
/// positive for every score ≥ t.
fn brute_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|l| **l).count() as f64;
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let predicted: Vec<bool> = scores.iter().map(|s| *s >= t).collect();
        let tp = predicted.iter().zip(labels).filter(|(p, l)| **p && **l).count() as f64;
        let count = predicted.iter().filter(|p| **p).count() as f64;
        let recall = tp / positives;
        ap += (recall - prev_recall) * (tp / count);
        prev_recall = recall;
    }
    ap
}

#[test]
fn auc_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 200 {
        // coarse scores force ties
        let scores: Vec<f64> = (0..10).map(|_| f64::from(rng.random_range(0..6u8)) / 5.0).collect();
        let labels: Vec<bool> = (0..10).map(|_| rng.random_bool(0.4)).collect();
        if labels.iter().all(|l| *l) || labels.iter().all(|l| !*l) {
            continue;
        }
        assert!((roc_auc(&scores, &labels).unwrap() - brute_roc(&scores, &labels)).abs() < 1e-12);
        assert!((pr_auc(&scores, &labels).unwrap() - brute_ap(&scores, &labels)).abs() < 1e-12);
        checked += 1;
    }
}
