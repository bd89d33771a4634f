//! Paired significance tests for accuracy deltas: exact two-sided McNemar
//! on the discordant counts and a seeded sample-level bootstrap.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::rng::substream;
use rand::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum SignificanceError {
    #[error("bootstrap input is empty")]
    EmptyInput,
    #[error("bootstrap needs at least one iteration")]
    ZeroIterations,
}

/// Exact two-sided McNemar test on discordant counts (b, c):
/// p = min(1, 2 P(X >= max(b, c))) with X ~ Binomial(b + c, 1/2).
///
/// (0, 0) returns 1.0. Counts up to 100 use exact integer binomial sums;
/// larger counts switch to log-space summation.
pub fn mcnemar_exact(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let m = b.max(c);
    let tail = if n <= 100 {
        binomial_tail_integer(n, m)
    } else {
        binomial_tail_log(n, m)
    };
    (2.0 * tail).min(1.0)
}

// P(X >= m) for X ~ Bin(n, 1/2), summing exact u128 coefficients.
// C(100, 50) ~ 1.01e29 fits comfortably in u128.
fn binomial_tail_integer(n: u64, m: u64) -> f64 {
    let mut coeff: u128 = 1;
    let mut sum: u128 = 0;
    for k in 0..=n {
        if k >= m {
            sum += coeff;
        }
        if k < n {
            coeff = coeff * (n - k) as u128 / (k + 1) as u128;
        }
    }
    sum as f64 * 0.5f64.powi(n as i32)
}

fn binomial_tail_log(n: u64, m: u64) -> f64 {
    let ln_n_fact = ln_gamma(n as f64 + 1.0);
    let ln_half_n = n as f64 * std::f64::consts::LN_2;
    let mut tail = 0.0;
    for k in m..=n {
        let ln_term =
            ln_n_fact - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0) - ln_half_n;
        tail += ln_term.exp();
    }
    tail.min(1.0)
}

/// Result of a paired accuracy bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Fraction of resamples where the candidate strictly beats the baseline.
    pub p_improve: f64,
    /// Mean accuracy delta (candidate minus baseline) over resamples.
    pub delta_mean: f64,
    /// Percentile 95% confidence interval for the delta.
    pub delta_ci: (f64, f64),
    pub iterations: u64,
    pub seed: u64,
}

/// Sample-level bootstrap of the accuracy delta between a candidate and a
/// baseline evaluated on the same samples.
///
/// `pairs` holds per-sample (candidate_correct, baseline_correct). Each
/// iteration resamples `pairs.len()` indices with replacement from its own
/// substream of `seed`, so results are reproducible and independent of
/// iteration order.
pub fn bootstrap_improvement(
    pairs: &[(bool, bool)],
    iterations: u64,
    seed: u64,
) -> Result<BootstrapResult, SignificanceError> {
    if pairs.is_empty() {
        return Err(SignificanceError::EmptyInput);
    }
    if iterations == 0 {
        return Err(SignificanceError::ZeroIterations);
    }
    let n = pairs.len();
    // Per-sample delta contribution is -1, 0 or +1.
    let contrib: Vec<i32> = pairs
        .iter()
        .map(|&(cand, base)| cand as i32 - base as i32)
        .collect();
    let mut deltas: Vec<f64> = Vec::with_capacity(iterations as usize);
    let mut improved = 0u64;
    for iter in 0..iterations {
        let mut rng = substream(seed, iter);
        let mut sum = 0i64;
        for _ in 0..n {
            sum += contrib[rng.random_range(0..n)] as i64;
        }
        let delta = sum as f64 / n as f64;
        if delta > 0.0 {
            improved += 1;
        }
        deltas.push(delta);
    }
    let delta_mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    deltas.sort_by(|a, b| a.partial_cmp(b).expect("finite deltas"));
    Ok(BootstrapResult {
        p_improve: improved as f64 / iterations as f64,
        delta_mean,
        delta_ci: (percentile(&deltas, 0.025), percentile(&deltas, 0.975)),
        iterations,
        seed,
    })
}

// Linear-interpolation percentile over a sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
