//! Paired two-sided Wilcoxon signed-rank test.
//!
//! Zero differences are dropped and tied magnitudes share their average rank.
//! For `n ≤ 25` the null distribution of `W+` is computed exactly by counting
//! sign patterns over doubled (hence integer) ranks; larger samples use the
//! normal approximation with tie-corrected variance and a 0.5 continuity
//! correction.

use crate::error::{Error, Result};

pub const EXACT_MAX_N: usize = 25;
pub const MIN_NONZERO: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: WilcoxonMethod,
}

/// Average ranks (1-based) of `values`, ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Counts of each achievable doubled `W+` over all `2^n` sign patterns.
fn doubled_rank_sum_counts(doubled: &[usize]) -> Vec<f64> {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        reach += r;
        for s in (r..=reach).rev() {
            counts[s] += counts[s - r];
        }
    }
    counts
}

pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::data(format!("paired samples differ in length: {} vs {}", x.len(), y.len())));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::data("non-finite paired difference"));
    }
    let n = diffs.len();
    if n < MIN_NONZERO {
        return Err(Error::InsufficientData(format!(
            "{n} nonzero paired differences, need at least {MIN_NONZERO}"
        )));
    }
    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let (p, method) = if n <= EXACT_MAX_N {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let counts = doubled_rank_sum_counts(&doubled);
        let observed = (2.0 * w_plus).round() as usize;
        let all = 2f64.powi(n as i32);
        let lower: f64 = counts[..=observed].iter().sum::<f64>() / all;
        let upper: f64 = counts[observed..].iter().sum::<f64>() / all;
        ((2.0 * lower.min(upper)).min(1.0), WilcoxonMethod::Exact)
    } else {
        let mean = total / 2.0;
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().position(|r| *r != sorted[i]).map_or(sorted.len(), |p| i + p);
            let t = (j - i) as f64;
            tie_term += t * t * t - t;
            i = j;
        }
        let nf = n as f64;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        // 2·(1 − Φ(z)) without cancellation in the tail.
        (libm::erfc(z / std::f64::consts::SQRT_2).min(1.0), WilcoxonMethod::NormalApprox)
    };
    Ok(WilcoxonResult {
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        p_value: p,
        n_effective: n,
        method,
    })
}
