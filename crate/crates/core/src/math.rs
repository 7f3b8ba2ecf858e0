//! Scalar helpers over `libm` so the estimators build without `std`.

pub use libm::{acos, exp, fabs, log, sqrt};

/// `log(exp(a) + exp(b))` without overflow; `-inf` is the additive identity.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + libm::log1p(exp(lo - hi))
}

/// Numerically stable `log Σ exp(x_i)`. Empty input yields `-inf`.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, log_add_exp)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Shannon entropy in nats of a distribution given by log-probabilities.
/// Zero-mass outcomes contribute nothing.
pub fn entropy_from_logprobs<I: IntoIterator<Item = f64>>(logprobs: I) -> f64 {
    logprobs.into_iter().filter(|lp| *lp > f64::NEG_INFINITY).map(|lp| -exp(lp) * lp).sum()
}

/// Average ranks (0-based) with ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> alloc::vec::Vec<f64> {
    let n = values.len();
    let mut order: alloc::vec::Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j - 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = shared;
        }
        i = j;
    }
    ranks
}
