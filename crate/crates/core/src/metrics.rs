//! Evaluation of uncertainty scores.
//!
//! Sequence-level scores are judged by prediction-rejection: instances are
//! rejected from most to least uncertain and the mean quality of what
//! remains is tracked. PRR compares the area under that curve with the
//! oracle ordering and with random rejection. Claim-level scores are judged
//! as detectors of unsupported claims (ROC-AUC, PR-AUC), and normalized
//! confidences by their squared error against quality.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::average_ranks;

pub use crate::text::{exact_accuracy, rouge_l};

pub const DEFAULT_MAX_REJECTION: f64 = 0.5;
/// PRR is undefined when the oracle and random areas are closer than this.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// How instances with equal uncertainty are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// A partially rejected tie group contributes its mean quality, which is
    /// the expectation over all orderings within the group.
    #[default]
    Average,
    /// Earlier input positions are rejected first.
    Stable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCurve {
    /// `(rejected fraction, mean retained quality)`.
    pub points: Vec<(f64, f64)>,
    /// Input indices in rejection order.
    pub ordering: Vec<usize>,
}

fn check_inputs(uncertainties: &[f64], qualities: &[f64], max_rejection: f64) -> Result<()> {
    if uncertainties.len() != qualities.len() {
        return Err(Error::LengthMismatch { left: uncertainties.len(), right: qualities.len() });
    }
    if uncertainties.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(max_rejection > 0.0 && max_rejection <= 1.0) {
        return Err(Error::InvalidParameter("max_rejection must lie in (0, 1]".into()));
    }
    if uncertainties.iter().chain(qualities).any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("NaN in uncertainties or qualities".into()));
    }
    Ok(())
}

/// Number of rejection steps: `floor(max_rejection · n)`, keeping at least
/// one instance.
fn steps(n: usize, max_rejection: f64) -> usize {
    let k = libm::floor(max_rejection * n as f64 + 1e-9) as usize;
    k.min(n - 1)
}

pub fn rejection_curve(
    uncertainties: &[f64],
    qualities: &[f64],
    max_rejection: f64,
    ties: TieBreak,
) -> Result<RejectionCurve> {
    check_inputs(uncertainties, qualities, max_rejection)?;
    let n = uncertainties.len();
    let mut ordering: Vec<usize> = (0..n).collect();
    ordering.sort_by(|&a, &b| uncertainties[b].total_cmp(&uncertainties[a]));

    // removed[k] = quality mass removed after rejecting k instances
    let mut removed = Vec::with_capacity(n + 1);
    removed.push(0.0);
    match ties {
        TieBreak::Stable => {
            for &i in &ordering {
                let last = removed[removed.len() - 1];
                removed.push(last + qualities[i]);
            }
        }
        TieBreak::Average => {
            let mut start = 0;
            while start < n {
                let mut end = start + 1;
                while end < n && uncertainties[ordering[end]] == uncertainties[ordering[start]] {
                    end += 1;
                }
                let base = removed[start];
                let group: f64 = ordering[start..end].iter().map(|&i| qualities[i]).sum();
                let size = (end - start) as f64;
                for m in 1..=(end - start) {
                    removed.push(if m == end - start { base + group } else { base + group * m as f64 / size });
                }
                start = end;
            }
        }
    }
    let total = removed[n];
    let points = (0..=steps(n, max_rejection))
        .map(|k| {
            let kept = (total - removed[k]) / (n - k) as f64;
            (k as f64 / n as f64, if k == 0 { total / n as f64 } else { kept })
        })
        .collect();
    Ok(RejectionCurve { points, ordering })
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrrResult {
    pub prr: f64,
    pub auc_unc: f64,
    pub auc_oracle: f64,
    pub auc_rnd: f64,
    pub max_rejection: f64,
    pub curve: RejectionCurve,
}

/// Prediction-rejection ratio `(AUC_unc - AUC_rnd) / (AUC_oracle - AUC_rnd)`.
///
/// The oracle rejects in ascending quality; the random baseline is flat at
/// the mean quality. All three areas use the same grid.
pub fn prr(uncertainties: &[f64], qualities: &[f64], max_rejection: f64, ties: TieBreak) -> Result<PrrResult> {
    let curve = rejection_curve(uncertainties, qualities, max_rejection, ties)?;
    let negated: Vec<f64> = qualities.iter().map(|q| -q).collect();
    let oracle = rejection_curve(&negated, qualities, max_rejection, ties)?;
    let mean = curve.points[0].1;
    let flat: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.0, mean)).collect();
    let auc_unc = trapezoid(&curve.points);
    let auc_oracle = trapezoid(&oracle.points);
    let auc_rnd = trapezoid(&flat);
    if !(auc_oracle - auc_rnd >= DEGENERATE_GAP) {
        return Err(Error::DegenerateQuality);
    }
    Ok(PrrResult {
        prr: (auc_unc - auc_rnd) / (auc_oracle - auc_rnd),
        auc_unc,
        auc_oracle,
        auc_rnd,
        max_rejection,
        curve,
    })
}

fn check_labels(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("NaN score".into()));
    }
    let positives = labels.iter().filter(|l| **l).count();
    Ok((positives, labels.len() - positives))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_labels(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, l)| **l).map(|(r, _)| r).sum();
    // 0-based ranks: subtract P(P-1)/2
    let u = rank_sum - (pos * (pos - 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Average precision: `Σ (R_t - R_{t-1}) P_t` over distinct score
/// thresholds, highest first.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_labels(scores, labels)?;
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let new_tp = order[start..end].iter().filter(|&&i| labels[i]).count();
        tp += new_tp;
        fp += end - start - new_tp;
        if new_tp > 0 {
            ap += (new_tp as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
        start = end;
    }
    Ok(ap)
}

/// Mean squared difference between confidences and qualities in `[0, 1]`.
pub fn calibration_mse(confidences: &[f64], qualities: &[f64]) -> Result<f64> {
    if confidences.len() != qualities.len() {
        return Err(Error::LengthMismatch { left: confidences.len(), right: qualities.len() });
    }
    if confidences.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&value) = confidences.iter().chain(qualities).find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::RangeViolation { value });
    }
    let sum: f64 = confidences.iter().zip(qualities).map(|(c, q)| (c - q) * (c - q)).sum();
    Ok(sum / confidences.len() as f64)
}
