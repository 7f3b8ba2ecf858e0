//! Density-based scores over record embeddings.
//!
//! A [`GaussianFit`] is estimated on a training split; Mahalanobis distance,
//! relative Mahalanobis distance and the robust density estimator (PCA
//! followed by a minimum-covariance-determinant fit) measure how far a new
//! embedding falls from that training distribution. [`huq`] blends an
//! information-based and a density-based score by rank.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math::average_ranks;
use crate::record::GenerationRecord;

/// Default ridge as a fraction of the mean covariance diagonal.
pub const RIDGE_SCALE: f64 = 1e-6;
/// Upper bound on the default PCA dimension.
pub const MAX_DEFAULT_RANK: usize = 100;
pub const MCD_RESTARTS: usize = 20;
const MCD_MAX_CSTEPS: usize = 100;

/// Gaussian with mean `μ` and regularized covariance `Σ + ridge·I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mean: Vec<f64>,
    /// Empirical (1/n) covariance with the ridge already added.
    pub covariance: Matrix,
    pub precision: Matrix,
    pub ridge: f64,
    pub d: usize,
    pub n: usize,
}

fn check_dims<E: AsRef<[f64]>>(points: &[E]) -> Result<usize> {
    let d = points.first().map(|p| p.as_ref().len()).ok_or(Error::EmptyInput)?;
    for p in points {
        let p = p.as_ref();
        if p.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.len() });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateFit("embedding contains a non-finite value".into()));
        }
    }
    if d == 0 {
        return Err(Error::DegenerateFit("zero-dimensional embeddings".into()));
    }
    Ok(d)
}

fn mean_and_covariance<E: AsRef<[f64]>>(points: &[E], d: usize) -> (Vec<f64>, Matrix) {
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = Matrix::zeros(d, d);
    for p in points {
        let p = p.as_ref();
        for i in 0..d {
            let di = p[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (p[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

/// `RIDGE_SCALE · trace(Σ)/d`, or `RIDGE_SCALE` itself when `Σ = 0`.
pub fn default_ridge(covariance: &Matrix) -> f64 {
    let per_dim = covariance.trace() / covariance.rows() as f64;
    if per_dim > 0.0 {
        RIDGE_SCALE * per_dim
    } else {
        RIDGE_SCALE
    }
}

/// Fits mean and covariance; `ridge = None` uses [`default_ridge`].
pub fn fit_gaussian<E: AsRef<[f64]>>(embeddings: &[E], ridge: Option<f64>) -> Result<GaussianFit> {
    let d = check_dims(embeddings)?;
    let n = embeddings.len();
    if n <= 1 {
        return Err(Error::DegenerateFit(format!("need at least 2 embeddings, got {n}")));
    }
    let (mean, mut covariance) = mean_and_covariance(embeddings, d);
    let ridge = match ridge {
        Some(r) if !(r >= 0.0 && r.is_finite()) => {
            return Err(Error::InvalidParameter("ridge must be finite and >= 0".into()))
        }
        Some(r) => r,
        None => default_ridge(&covariance),
    };
    for i in 0..d {
        covariance[(i, i)] += ridge;
    }
    let precision = covariance.cholesky()?.inverse();
    Ok(GaussianFit { mean, covariance, precision, ridge, d, n })
}

impl GaussianFit {
    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        Ok(())
    }

    /// Log-determinant of the regularized covariance.
    pub fn log_det(&self) -> Result<f64> {
        Ok(self.covariance.cholesky()?.log_det())
    }
}

/// Squared Mahalanobis distance `(x-μ)ᵀ Σ⁻¹ (x-μ)`.
pub fn mahalanobis(fit: &GaussianFit, embedding: &[f64]) -> Result<f64> {
    fit.check(embedding)?;
    let diff: Vec<f64> = embedding.iter().zip(&fit.mean).map(|(x, m)| x - m).collect();
    Ok(fit.precision.quadratic_form(&diff).max(0.0))
}

/// `MD(x) - MD₀(x)` against a background fit.
pub fn relative_mahalanobis(task: &GaussianFit, background: &GaussianFit, embedding: &[f64]) -> Result<f64> {
    if task.d != background.d {
        return Err(Error::DimensionMismatch { expected: task.d, got: background.d });
    }
    Ok(mahalanobis(task, embedding)? - mahalanobis(background, embedding)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdeParams {
    /// Reduced dimension; `None` uses `min(d, n-1, 100)`.
    pub rank: Option<usize>,
    /// Fraction of points kept by the MCD subset, in `(0.5, 1]`.
    pub mcd_fraction: f64,
    pub ridge: Option<f64>,
    pub seed: u64,
}

impl Default for RdeParams {
    fn default() -> Self {
        Self { rank: None, mcd_fraction: 0.75, ridge: None, seed: 0 }
    }
}

/// PCA projection followed by a robust Gaussian in the reduced space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdeFit {
    /// `d × r` matrix with orthonormal columns.
    pub projection: Matrix,
    pub robust_fit: GaussianFit,
    pub r: usize,
    pub params: RdeParams,
}

impl RdeFit {
    /// `Pᵀx`.
    pub fn project(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        let d = self.projection.rows();
        if embedding.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: embedding.len() });
        }
        Ok(self.projection.transpose().mul_vec(embedding))
    }
}

/// Columns are the eigenvectors of the `r` largest covariance eigenvalues.
pub fn pca_projection<E: AsRef<[f64]>>(embeddings: &[E], r: usize) -> Result<Matrix> {
    let d = check_dims(embeddings)?;
    if r == 0 || r > d {
        return Err(Error::InvalidParameter(format!("PCA rank {r} outside 1..={d}")));
    }
    let (_, cov) = mean_and_covariance(embeddings, d);
    let eig = cov.symmetric_eigen()?;
    Ok(Matrix::from_fn(d, r, |i, c| eig.vectors[(i, d - 1 - c)]))
}

fn subset_size(n: usize, fraction: f64) -> usize {
    // the epsilon absorbs products such as 0.8 * 5 landing just above 4
    let h = libm::ceil(fraction * n as f64 - 1e-9) as usize;
    h.clamp(2, n)
}

fn fit_subset(points: &[Vec<f64>], subset: &[usize], ridge: Option<f64>) -> Result<GaussianFit> {
    let chosen: Vec<&[f64]> = subset.iter().map(|&i| points[i].as_slice()).collect();
    fit_gaussian(&chosen, ridge)
}

/// Indices of the `h` points closest to `fit`, sorted.
fn closest(points: &[Vec<f64>], fit: &GaussianFit, h: usize) -> Result<Vec<usize>> {
    let mut scored =
        points.iter().enumerate().map(|(i, p)| Ok((mahalanobis(fit, p)?, i))).collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = scored[..h].iter().map(|s| s.1).collect();
    out.sort_unstable();
    Ok(out)
}

/// FAST-MCD: random elemental starts refined by concentration steps; the
/// `h`-subset with the smallest covariance determinant wins.
fn mcd_subset(points: &[Vec<f64>], h: usize, ridge: Option<f64>, seed: u64) -> Result<Vec<usize>> {
    let n = points.len();
    if h >= n {
        return Ok((0..n).collect());
    }
    let start = (points[0].len() + 1).min(n).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..MCD_RESTARTS {
        let mut subset = index::sample(&mut rng, n, start).into_vec();
        subset.sort_unstable();
        let mut fit = fit_subset(points, &subset, ridge)?;
        for _ in 0..MCD_MAX_CSTEPS {
            let next = closest(points, &fit, h)?;
            if next == subset {
                break;
            }
            subset = next;
            fit = fit_subset(points, &subset, ridge)?;
        }
        let det = fit.log_det()?;
        if best.as_ref().is_none_or(|(b, _)| det < *b) {
            best = Some((det, subset));
        }
    }
    Ok(best.map(|b| b.1).unwrap_or_default())
}

pub fn fit_rde<E: AsRef<[f64]>>(embeddings: &[E], params: &RdeParams) -> Result<RdeFit> {
    let d = check_dims(embeddings)?;
    let n = embeddings.len();
    if !(params.mcd_fraction > 0.5 && params.mcd_fraction <= 1.0) {
        return Err(Error::InvalidParameter("mcd_fraction must lie in (0.5, 1]".into()));
    }
    let r = params.rank.unwrap_or_else(|| d.min(n.saturating_sub(1)).min(MAX_DEFAULT_RANK));
    if r == 0 || n <= r {
        return Err(Error::DegenerateFit(format!("need more than {r} embeddings, got {n}")));
    }
    let projection = pca_projection(embeddings, r)?;
    let pt = projection.transpose();
    let reduced: Vec<Vec<f64>> = embeddings.iter().map(|e| pt.mul_vec(e.as_ref())).collect();
    let h = subset_size(n, params.mcd_fraction);
    let subset = mcd_subset(&reduced, h, params.ridge, params.seed)?;
    let robust_fit = fit_subset(&reduced, &subset, params.ridge)?;
    Ok(RdeFit { projection, robust_fit, r, params: *params })
}

/// Mahalanobis distance of `Pᵀx` under the robust fit.
pub fn rde_score(fit: &RdeFit, embedding: &[f64]) -> Result<f64> {
    mahalanobis(&fit.robust_fit, &fit.project(embedding)?)
}

pub fn record_embedding(record: &GenerationRecord) -> Result<&[f64]> {
    record.embedding.as_deref().ok_or(Error::MissingEmbedding)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuqParams {
    pub alpha: f64,
}

impl Default for HuqParams {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

/// `((1-α)·rank(info) + α·rank(density)) / (n-1)` with tie-averaged 0-based
/// ranks; a single item scores 0.
pub fn huq(info_scores: &[f64], density_scores: &[f64], params: &HuqParams) -> Result<Vec<f64>> {
    if info_scores.len() != density_scores.len() {
        return Err(Error::LengthMismatch { left: info_scores.len(), right: density_scores.len() });
    }
    if info_scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0..=1.0).contains(&params.alpha) {
        return Err(Error::InvalidParameter("alpha must lie in [0, 1]".into()));
    }
    let scale = (info_scores.len() - 1).max(1) as f64;
    let ri = average_ranks(info_scores);
    let rd = average_ranks(density_scores);
    Ok(ri.iter().zip(&rd).map(|(a, b)| ((1.0 - params.alpha) * a + params.alpha * b) / scale).collect())
}
