//! Mapping raw uncertainty to confidence in `[0, 1]`.
//!
//! Four normalizers are fitted on held-out (uncertainty, quality) pairs:
//! min-max scaling of negated uncertainty, the empirical survival function,
//! and two performance-calibrated variants that predict expected quality,
//! one by equal-frequency binning and one by centered isotonic regression.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::CalibrationPair;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizerKind {
    Linear,
    Quantile,
    BinnedPcc,
    IsotonicPcc,
}

impl NormalizerKind {
    pub const ALL: [NormalizerKind; 4] =
        [NormalizerKind::Linear, NormalizerKind::Quantile, NormalizerKind::BinnedPcc, NormalizerKind::IsotonicPcc];

    pub fn id(self) -> &'static str {
        match self {
            NormalizerKind::Linear => "linear",
            NormalizerKind::Quantile => "quantile",
            NormalizerKind::BinnedPcc => "binned_pcc",
            NormalizerKind::IsotonicPcc => "isotonic_pcc",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id)
    }

    /// Whether confidence is a non-increasing function of uncertainty.
    pub fn is_monotone(self) -> bool {
        self != NormalizerKind::BinnedPcc
    }
}

/// One equal-frequency bin over `[lo, hi]` in uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub mean_quality: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CalibrationModel {
    /// Bounds of `c = -u` over the calibration set.
    Linear {
        c_min: f64,
        c_max: f64,
    },
    /// Sorted calibration uncertainties.
    Quantile {
        sorted: Vec<f64>,
    },
    BinnedPcc {
        bins: Vec<Bin>,
    },
    /// `(u, confidence)` knots, strictly increasing in `u` and
    /// non-increasing in confidence.
    IsotonicPcc {
        knots: Vec<(f64, f64)>,
    },
}

fn check_pairs(pairs: &[CalibrationPair], needed: usize) -> Result<()> {
    if pairs.len() < needed {
        return Err(Error::TooFewSamples { needed, got: pairs.len() });
    }
    if pairs.iter().any(|p| !p.uncertainty.is_finite() || !p.quality.is_finite()) {
        return Err(Error::InvalidParameter("calibration pairs must be finite".into()));
    }
    Ok(())
}

fn sorted_by_uncertainty(pairs: &[CalibrationPair]) -> Vec<CalibrationPair> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.uncertainty.total_cmp(&b.uncertainty).then(a.quality.total_cmp(&b.quality)));
    sorted
}

pub fn fit_linear(pairs: &[CalibrationPair]) -> Result<CalibrationModel> {
    check_pairs(pairs, 2)?;
    let c_min = pairs.iter().map(|p| -p.uncertainty).fold(f64::INFINITY, f64::min);
    let c_max = pairs.iter().map(|p| -p.uncertainty).fold(f64::NEG_INFINITY, f64::max);
    if !(c_max > c_min) {
        return Err(Error::DegenerateRange);
    }
    Ok(CalibrationModel::Linear { c_min, c_max })
}

pub fn fit_quantile(pairs: &[CalibrationPair]) -> Result<CalibrationModel> {
    check_pairs(pairs, 1)?;
    let mut sorted: Vec<f64> = pairs.iter().map(|p| p.uncertainty).collect();
    sorted.sort_by(f64::total_cmp);
    Ok(CalibrationModel::Quantile { sorted })
}

/// Equal-frequency bins; a boundary that would split tied uncertainties moves
/// past the tie, and bins left empty by that are merged away.
pub fn fit_binned_pcc(pairs: &[CalibrationPair], bins: usize) -> Result<CalibrationModel> {
    if bins == 0 || pairs.len() < bins {
        return Err(Error::InvalidBinCount { bins, pairs: pairs.len() });
    }
    check_pairs(pairs, 1)?;
    let sorted = sorted_by_uncertainty(pairs);
    let n = sorted.len();
    let mut cuts = Vec::with_capacity(bins + 1);
    cuts.push(0);
    for b in 1..bins {
        let mut cut = b * n / bins;
        while cut < n && sorted[cut - 1].uncertainty == sorted[cut].uncertainty {
            cut += 1;
        }
        if cut > *cuts.last().unwrap_or(&0) && cut < n {
            cuts.push(cut);
        }
    }
    cuts.push(n);
    let bins = cuts
        .windows(2)
        .map(|w| {
            let members = &sorted[w[0]..w[1]];
            Bin {
                lo: members[0].uncertainty,
                hi: members[members.len() - 1].uncertainty,
                mean_quality: members.iter().map(|p| p.quality).sum::<f64>() / members.len() as f64,
                count: members.len(),
            }
        })
        .collect();
    Ok(CalibrationModel::BinnedPcc { bins })
}

#[derive(Debug, Clone, Copy)]
struct Block {
    x_sum: f64,
    y_sum: f64,
    weight: f64,
}

impl Block {
    fn mean(&self) -> f64 {
        self.y_sum / self.weight
    }

    fn merge(&mut self, other: Block) {
        self.x_sum += other.x_sum;
        self.y_sum += other.y_sum;
        self.weight += other.weight;
    }
}

/// Pool-adjacent-violators for a strictly decreasing fit: adjacent blocks
/// are pooled whenever the later mean is not below the earlier one.
fn pava_strictly_decreasing(points: impl IntoIterator<Item = Block>) -> Vec<Block> {
    let mut stack: Vec<Block> = Vec::new();
    for mut block in points {
        while let Some(prev) = stack.last() {
            if block.mean() >= prev.mean() {
                let prev = stack.pop().unwrap_or(block);
                block.merge(prev);
            } else {
                break;
            }
        }
        stack.push(block);
    }
    stack
}

/// Centered isotonic regression of quality on uncertainty.
///
/// Blocks are placed at their weighted mean uncertainty and joined linearly.
/// With two or more blocks the outermost knots sit at the smallest and
/// largest observed uncertainty, so the curve is strictly decreasing over
/// the whole calibration range.
pub fn fit_isotonic_pcc(pairs: &[CalibrationPair]) -> Result<CalibrationModel> {
    check_pairs(pairs, 2)?;
    let sorted = sorted_by_uncertainty(pairs);
    let lo = sorted[0].uncertainty;
    let hi = sorted[sorted.len() - 1].uncertainty;
    if !(hi > lo) {
        return Err(Error::DegenerateRange);
    }
    let mut tied: Vec<Block> = Vec::new();
    for (i, p) in sorted.iter().enumerate() {
        let point = Block { x_sum: p.uncertainty, y_sum: p.quality, weight: 1.0 };
        match tied.last_mut() {
            Some(last) if sorted[i - 1].uncertainty == p.uncertainty => last.merge(point),
            _ => tied.push(point),
        }
    }
    let blocks = pava_strictly_decreasing(tied);
    let last = blocks.len() - 1;
    let knots = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let x = match i {
                _ if last == 0 => b.x_sum / b.weight,
                0 => lo,
                _ if i == last => hi,
                _ => b.x_sum / b.weight,
            };
            (x, b.mean().clamp(0.0, 1.0))
        })
        .collect();
    Ok(CalibrationModel::IsotonicPcc { knots })
}

pub fn fit(kind: NormalizerKind, pairs: &[CalibrationPair], bins: usize) -> Result<CalibrationModel> {
    match kind {
        NormalizerKind::Linear => fit_linear(pairs),
        NormalizerKind::Quantile => fit_quantile(pairs),
        NormalizerKind::BinnedPcc => fit_binned_pcc(pairs, bins),
        NormalizerKind::IsotonicPcc => fit_isotonic_pcc(pairs),
    }
}

fn interpolate(knots: &[(f64, f64)], u: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if u <= first.0 {
        return first.1;
    }
    if u >= last.0 {
        return last.1;
    }
    let j = knots.partition_point(|k| k.0 <= u);
    let (x0, y0) = knots[j - 1];
    let (x1, y1) = knots[j];
    y0 + (y1 - y0) * (u - x0) / (x1 - x0)
}

impl CalibrationModel {
    pub fn kind(&self) -> NormalizerKind {
        match self {
            CalibrationModel::Linear { .. } => NormalizerKind::Linear,
            CalibrationModel::Quantile { .. } => NormalizerKind::Quantile,
            CalibrationModel::BinnedPcc { .. } => NormalizerKind::BinnedPcc,
            CalibrationModel::IsotonicPcc { .. } => NormalizerKind::IsotonicPcc,
        }
    }

    /// Confidence in `[0, 1]` for uncertainty `u`; queries outside the
    /// calibration range clamp to the nearest bound, bin or knot.
    pub fn apply(&self, u: f64) -> Result<f64> {
        if u.is_nan() {
            return Err(Error::InvalidParameter("uncertainty is NaN".into()));
        }
        let c = match self {
            CalibrationModel::Linear { c_min, c_max } => {
                if !(c_max > c_min) {
                    return Err(Error::UnfittedModel);
                }
                (-u - c_min) / (c_max - c_min)
            }
            CalibrationModel::Quantile { sorted } => {
                if sorted.is_empty() {
                    return Err(Error::UnfittedModel);
                }
                1.0 - sorted.partition_point(|v| *v <= u) as f64 / sorted.len() as f64
            }
            CalibrationModel::BinnedPcc { bins } => {
                if bins.is_empty() {
                    return Err(Error::UnfittedModel);
                }
                let j = bins.partition_point(|b| b.lo <= u).max(1);
                bins[j - 1].mean_quality
            }
            CalibrationModel::IsotonicPcc { knots } => {
                if knots.is_empty() {
                    return Err(Error::UnfittedModel);
                }
                interpolate(knots, u)
            }
        };
        Ok(c.clamp(0.0, 1.0))
    }

    pub fn apply_all(&self, uncertainties: &[f64]) -> Result<Vec<f64>> {
        uncertainties.iter().map(|u| self.apply(*u)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pairs(raw: &[(f64, f64)]) -> Vec<CalibrationPair> {
        raw.iter().map(|(u, q)| CalibrationPair::new(*u, *q)).collect()
    }

    #[test]
    fn linear_endpoints_and_clipping() {
        let m = fit_linear(&pairs(&[(1.0, 0.0), (3.0, 0.0)])).unwrap();
        assert_eq!(m.apply(1.0).unwrap(), 1.0);
        assert_eq!(m.apply(3.0).unwrap(), 0.0);
        assert_eq!(m.apply(2.0).unwrap(), 0.5);
        assert_eq!(m.apply(5.0).unwrap(), 0.0);
        assert_eq!(m.apply(-4.0).unwrap(), 1.0);
        assert_eq!(fit_linear(&pairs(&[(2.0, 0.0), (2.0, 1.0)])), Err(Error::DegenerateRange));
    }

    #[test]
    fn quantile_counts() {
        let m = fit_quantile(&pairs(&[(3.0, 0.0), (1.0, 0.0), (4.0, 0.0), (2.0, 0.0)])).unwrap();
        assert_eq!(m.apply(0.5).unwrap(), 1.0);
        assert_eq!(m.apply(4.0).unwrap(), 0.0);
        assert_eq!(m.apply(2.0).unwrap(), 0.5);
        assert_eq!(m.apply(2.5).unwrap(), 0.5);
    }

    #[test]
    fn binned_hand_cases() {
        let m = fit_binned_pcc(&pairs(&[(0.0, 1.0), (1.0, 0.0)]), 2).unwrap();
        assert_eq!(m.apply(0.1).unwrap(), 1.0);
        assert_eq!(m.apply(1.5).unwrap(), 0.0);
        let one = fit_binned_pcc(&pairs(&[(0.0, 0.2), (1.0, 0.4), (2.0, 0.9)]), 1).unwrap();
        for u in [-1.0, 0.5, 9.0] {
            assert!((one.apply(u).unwrap() - 0.5).abs() < 1e-15);
        }
        assert!(fit_binned_pcc(&pairs(&[(0.0, 1.0)]), 2).is_err());
        assert!(fit_binned_pcc(&pairs(&[(0.0, 1.0)]), 0).is_err());
    }

    #[test]
    fn binned_keeps_ties_together() {
        let data = pairs(&[(1.0, 1.0), (1.0, 0.0), (1.0, 1.0), (1.0, 0.0), (2.0, 0.5), (3.0, 0.25)]);
        let CalibrationModel::BinnedPcc { bins } = fit_binned_pcc(&data, 3).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(bins.len(), 2);
        assert_eq!((bins[0].lo, bins[0].hi, bins[0].count), (1.0, 1.0, 4));
        assert_eq!(bins[0].mean_quality, 0.5);
        assert_eq!(bins[1].count, 2);
        assert!(bins.windows(2).all(|w| w[0].hi < w[1].lo));
    }

    #[test]
    fn isotonic_hand_cases() {
        let ordered = fit_isotonic_pcc(&pairs(&[(0.0, 1.0), (1.0, 0.5), (2.0, 0.0)])).unwrap();
        assert_eq!(ordered, CalibrationModel::IsotonicPcc { knots: vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.0)] });
        assert_eq!(ordered.apply(0.5).unwrap(), 0.75);

        let pooled = fit_isotonic_pcc(&pairs(&[(0.0, 0.2), (1.0, 0.8)])).unwrap();
        assert_eq!(pooled, CalibrationModel::IsotonicPcc { knots: vec![(0.5, 0.5)] });

        let flat = fit_isotonic_pcc(&pairs(&[(0.0, 0.3), (1.0, 0.3), (5.0, 0.3)])).unwrap();
        for u in [-1.0, 0.0, 2.0, 10.0] {
            assert!((flat.apply(u).unwrap() - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn isotonic_is_non_increasing_and_strict_inside_range() {
        let data = pairs(&[(0.1, 0.9), (0.2, 0.95), (0.4, 0.6), (0.5, 0.7), (0.7, 0.2), (0.9, 0.3), (1.0, 0.1)]);
        let m = fit_isotonic_pcc(&data).unwrap();
        let CalibrationModel::IsotonicPcc { knots } = &m else { panic!("wrong kind") };
        assert!(knots.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 > w[1].1));
        assert_eq!(knots[0].0, 0.1);
        assert_eq!(knots[knots.len() - 1].0, 1.0);
        let values = m.apply_all(&[0.1, 0.2, 0.4, 0.5, 0.7, 0.9, 1.0]).unwrap();
        assert!(values.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn kinds_round_trip_ids() {
        for k in NormalizerKind::ALL {
            assert_eq!(NormalizerKind::from_id(k.id()), Some(k));
        }
        assert_eq!(CalibrationModel::Quantile { sorted: vec![] }.apply(0.0), Err(Error::UnfittedModel));
    }
}
