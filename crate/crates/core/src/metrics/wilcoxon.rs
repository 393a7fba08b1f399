//! One-sided Wilcoxon signed-rank test for paired distances.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::MetricError;

/// Largest tie-free sample that gets the exact null distribution.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    pub fn of(r: f64) -> Self {
        match r {
            r if r > 0.5 => Magnitude::Large,
            r if r > 0.3 => Magnitude::Medium,
            r if r > 0.1 => Magnitude::Small,
            _ => Magnitude::Negligible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub n_effective: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// One-sided p-value for the alternative that differences tend to be negative.
    pub p_value: f64,
    /// Rank-biserial correlation magnitude `|W+ - W-| / (W+ + W-)`.
    pub effect_size: f64,
    /// True when `W- > W+`, i.e. the sample leans toward the alternative.
    pub favors_alternative: bool,
    pub magnitude: Magnitude,
    pub method: Method,
}

/// Tests whether `differences` (e.g. transformation minus enrichment) are
/// shifted below zero. Zeros are dropped and tied magnitudes get average ranks.
/// The null distribution is exact for at most [`EXACT_MAX_N`] tie-free
/// differences and normal (continuity- and tie-corrected) otherwise.
pub fn wilcoxon_one_sided(differences: &[f64]) -> Result<TestResult, MetricError> {
    wilcoxon_with(differences, None)
}

/// As [`wilcoxon_one_sided`] with the null distribution fixed. `Method::Exact`
/// fails with [`MetricError::ExactUnavailable`] on ties or more than
/// [`EXACT_MAX_N`] non-zero differences.
pub fn wilcoxon_one_sided_with(differences: &[f64], method: Method) -> Result<TestResult, MetricError> {
    wilcoxon_with(differences, Some(method))
}

fn wilcoxon_with(differences: &[f64], forced: Option<Method>) -> Result<TestResult, MetricError> {
    if differences.iter().any(|d| !d.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let mut nonzero: Vec<f64> = differences.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(MetricError::AllZeroDifferences);
    }
    nonzero.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let n = nonzero.len();

    let mut ranks = vec![0.0; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && nonzero[j].abs() == nonzero[i].abs() {
            j += 1;
        }
        let average = (i + j + 1) as f64 / 2.0;
        ranks[i..j].iter_mut().for_each(|r| *r = average);
        if j - i > 1 {
            tie_sizes.push((j - i) as f64);
        }
        i = j;
    }
    let w_plus: f64 = nonzero.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let exact_ok = n <= EXACT_MAX_N && tie_sizes.is_empty();
    let method = match forced {
        Some(Method::Exact) if !exact_ok => return Err(MetricError::ExactUnavailable(n)),
        Some(m) => m,
        None if exact_ok => Method::Exact,
        None => Method::NormalApprox,
    };
    let p_value = if method == Method::Exact {
        exact_lower_tail(n, w_plus.round() as usize)
    } else {
        let nf = n as f64;
        let tie_term: f64 = tie_sizes.iter().map(|t| t * t * t - t).sum::<f64>() / 48.0;
        let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let p = if variance > 0.0 {
            let z = (w_plus - total / 2.0 + 0.5) / variance.sqrt();
            Normal::standard().cdf(z)
        } else {
            1.0
        };
        p.min(1.0)
    };
    let effect_size = ((w_plus - w_minus) / total).abs();
    Ok(TestResult {
        n_effective: n,
        w_plus,
        w_minus,
        p_value,
        effect_size,
        favors_alternative: w_minus > w_plus,
        magnitude: Magnitude::of(effect_size),
        method,
    })
}

/// `P(W+ <= w)` under the null for ranks `1..=n`, counting sign patterns by rank sum.
fn exact_lower_tail(n: usize, w: usize) -> f64 {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for rank in 1..=n {
        for s in (rank..=max).rev() {
            counts[s] += counts[s - rank];
        }
    }
    let below: u64 = counts[..=w.min(max)].iter().sum();
    below as f64 / (1u64 << n) as f64
}
