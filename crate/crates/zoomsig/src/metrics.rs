//! Nonparametric statistics relating consistency to correctness: AUC,
//! tie-corrected Spearman correlation with significance, bucketed accuracy,
//! oracle-partition means, and grouped slices.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::ingest::GroupLabels;

/// Bucket edges of the published accuracy-by-consistency table.
pub const DEFAULT_BUCKET_EDGES: [f64; 4] = [30.0, 80.0, 150.0, 250.0];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("AUC undefined: input must contain both correct and incorrect samples")]
    UndefinedAuc,
    #[error("correlation undefined: input vector is constant")]
    UndefinedCorrelation,
    #[error("input lengths differ: {xs} vs {ys}")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("bucket edges must be finite and strictly ascending")]
    InvalidEdges,
    #[error("unknown group dimension `{0}`")]
    UnknownDimension(String),
    #[error("values must be finite")]
    NonFiniteValue,
}

/// One prediction scored against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub consistency: f64,
    pub correct: bool,
    pub labels: GroupLabels,
}

impl ScoredSample {
    pub fn new(consistency: f64, correct: bool) -> Self {
        Self {
            consistency,
            correct,
            labels: GroupLabels::default(),
        }
    }

    pub fn with_labels(mut self, labels: GroupLabels) -> Self {
        self.labels = labels;
        self
    }
}

/// AUC / Spearman summary for one model's (consistency, correctness) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub auc: f64,
    pub spearman_rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// AUC for "lower consistency predicts correct": over all correct x
/// incorrect pairs, P(c_correct < c_incorrect) + 0.5 P(equal).
///
/// Computed by rank sum in O(n log n); ties contribute half through
/// average ranks.
pub fn auc_lower_score_positive(samples: &[ScoredSample]) -> Result<f64, MetricsError> {
    if samples.iter().any(|s| !s.consistency.is_finite()) {
        return Err(MetricsError::NonFiniteValue);
    }
    let scores: Vec<f64> = samples.iter().map(|s| s.consistency).collect();
    let n_correct = samples.iter().filter(|s| s.correct).count();
    let n_incorrect = samples.len() - n_correct;
    if n_correct == 0 || n_incorrect == 0 {
        return Err(MetricsError::UndefinedAuc);
    }
    let ranks = average_ranks(&scores);
    let rank_sum_correct: f64 = samples
        .iter()
        .zip(&ranks)
        .filter(|(s, _)| s.correct)
        .map(|(_, r)| *r)
        .sum();
    // Pairs where the correct sample scored higher (ties count half).
    let u_higher = rank_sum_correct - (n_correct * (n_correct + 1)) as f64 / 2.0;
    let pairs = (n_correct * n_incorrect) as f64;
    Ok((pairs - u_higher) / pairs)
}

/// How the Spearman p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Exhaustive enumeration of all n! pairings.
    ExactPermutation,
    /// Seeded Monte Carlo permutation (100,000 shuffles).
    MonteCarloPermutation,
    /// Two-sided Student-t approximation on t = rho sqrt((n-2)/(1-rho^2)).
    TDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spearman {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: PValueMethod,
}

// Exhaustive permutation is exact but factorial; beyond 9 items we fall
// back to a seeded Monte Carlo permutation test until the t-approximation
// becomes standard at n >= 20.
const EXACT_PERMUTATION_MAX: usize = 9;
const T_APPROX_MIN: usize = 20;
const MC_PERMUTATIONS: usize = 100_000;
const MC_SEED: u64 = 0x5EA8_AA2C_0DE5_EED5;

/// Spearman rank correlation with average-rank tie handling and a
/// two-sided p-value.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Spearman, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    let n = xs.len();
    if n < 3 {
        return Err(MetricsError::InsufficientData { needed: 3, got: n });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFiniteValue);
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let rho = pearson(&rx, &ry).ok_or(MetricsError::UndefinedCorrelation)?;
    let (p_value, method) = if n <= EXACT_PERMUTATION_MAX {
        (exact_permutation_p(&rx, &ry, rho), PValueMethod::ExactPermutation)
    } else if n < T_APPROX_MIN {
        (monte_carlo_p(&rx, &ry, rho), PValueMethod::MonteCarloPermutation)
    } else {
        (t_approximation_p(rho, n), PValueMethod::TDistribution)
    };
    Ok(Spearman {
        rho,
        p_value,
        n,
        method,
    })
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for k in i..j {
            ranks[order[k]] = avg;
        }
        i = j;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// p = fraction of all n! pairings with |rho| at least as extreme.
fn exact_permutation_p(rx: &[f64], ry: &[f64], observed: f64) -> f64 {
    let n = rx.len();
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let dx: Vec<f64> = rx.iter().map(|v| v - mx).collect();
    let dy: Vec<f64> = ry.iter().map(|v| v - my).collect();
    let denom = (dx.iter().map(|v| v * v).sum::<f64>()
        * dy.iter().map(|v| v * v).sum::<f64>())
    .sqrt();
    let threshold = observed.abs() - 1e-12;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut extreme = 0u64;
    let mut total = 0u64;
    permute(&mut perm, n, &mut |p| {
        let num: f64 = p.iter().enumerate().map(|(i, &j)| dx[i] * dy[j]).sum();
        if (num / denom).abs() >= threshold {
            extreme += 1;
        }
        total += 1;
    });
    extreme as f64 / total as f64
}

// Heap's algorithm; calls f with each permutation of items[..k].
fn permute(items: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k <= 1 {
        f(items);
        return;
    }
    for i in 0..k {
        permute(items, k - 1, f);
        if k.is_multiple_of(2) {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

fn monte_carlo_p(rx: &[f64], ry: &[f64], observed: f64) -> f64 {
    let threshold = observed.abs() - 1e-12;
    let mut ry_shuffled = ry.to_vec();
    let mut rng = crate::rng::stream(MC_SEED);
    let mut extreme = 0usize;
    for _ in 0..MC_PERMUTATIONS {
        ry_shuffled.shuffle(&mut rng);
        if let Some(r) = pearson(rx, &ry_shuffled) {
            if r.abs() >= threshold {
                extreme += 1;
            }
        }
    }
    (1 + extreme) as f64 / (MC_PERMUTATIONS + 1) as f64
}

fn t_approximation_p(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let denom = (1.0 - rho * rho).max(f64::EPSILON);
    let t = rho.abs() * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * dist.sf(t)).clamp(f64::MIN_POSITIVE, 1.0)
}

/// AUC + Spearman(consistency, correctness) over one model's samples.
pub fn correlation_report(samples: &[ScoredSample]) -> Result<CorrelationReport, MetricsError> {
    let auc = auc_lower_score_positive(samples)?;
    let xs: Vec<f64> = samples.iter().map(|s| s.consistency).collect();
    let ys: Vec<f64> = samples
        .iter()
        .map(|s| if s.correct { 1.0 } else { 0.0 })
        .collect();
    let sp = spearman(&xs, &ys)?;
    Ok(CorrelationReport {
        auc,
        spearman_rho: sp.rho,
        p_value: sp.p_value,
        n: samples.len(),
    })
}

/// One row of the accuracy-by-consistency-bucket table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub label: String,
    pub lo: f64,
    /// Upper edge; `None` for the open last bucket.
    pub hi: Option<f64>,
    pub n: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

/// Partition samples into `[0, e1), [e1, e2), ..., [ek, inf)` and report
/// per-bucket count and accuracy. Empty buckets keep `n = 0` and no
/// accuracy.
pub fn bucket_accuracy(
    samples: &[ScoredSample],
    edges: &[f64],
) -> Result<Vec<BucketRow>, MetricsError> {
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::InvalidEdges);
    }
    let mut rows: Vec<BucketRow> = Vec::with_capacity(edges.len() + 1);
    for i in 0..=edges.len() {
        let lo = if i == 0 { 0.0 } else { edges[i - 1] };
        let hi = edges.get(i).copied();
        let label = match (i, hi) {
            (0, Some(hi)) => format!("< {}", trim(hi)),
            (_, Some(hi)) => format!("{}-{}", trim(lo), trim(hi)),
            (0, None) => "all".to_string(),
            (_, None) => format!(">= {}", trim(lo)),
        };
        rows.push(BucketRow {
            label,
            lo,
            hi,
            n: 0,
            correct: 0,
            accuracy: None,
        });
    }
    for s in samples {
        if !s.consistency.is_finite() {
            return Err(MetricsError::NonFiniteValue);
        }
        let idx = edges.partition_point(|&e| e <= s.consistency);
        rows[idx].n += 1;
        if s.correct {
            rows[idx].correct += 1;
        }
    }
    for row in &mut rows {
        if row.n > 0 {
            row.accuracy = Some(row.correct as f64 / row.n as f64);
        }
    }
    Ok(rows)
}

fn trim(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// Four-way split of paired samples by per-model correctness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OraclePartition {
    BothCorrect,
    OnlyA,
    OnlyB,
    BothWrong,
}

impl OraclePartition {
    pub const ALL: [OraclePartition; 4] = [
        OraclePartition::BothCorrect,
        OraclePartition::OnlyA,
        OraclePartition::OnlyB,
        OraclePartition::BothWrong,
    ];

    pub fn from_correctness(a_correct: bool, b_correct: bool) -> Self {
        match (a_correct, b_correct) {
            (true, true) => OraclePartition::BothCorrect,
            (true, false) => OraclePartition::OnlyA,
            (false, true) => OraclePartition::OnlyB,
            (false, false) => OraclePartition::BothWrong,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OraclePartition::BothCorrect => "S11",
            OraclePartition::OnlyA => "S10",
            OraclePartition::OnlyB => "S01",
            OraclePartition::BothWrong => "S00",
        }
    }
}

/// Paired correctness plus the reference model's consistency.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedScore {
    pub a_correct: bool,
    pub b_correct: bool,
    pub a_consistency: Option<f64>,
}

/// Per-partition consistency statistics for the reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub partition: OraclePartition,
    pub n: usize,
    pub mean_consistency: Option<f64>,
    pub median_consistency: Option<f64>,
}

/// Group paired samples into S11/S10/S01/S00 and report count, mean and
/// median of the reference model's consistency. Partitions with no scored
/// samples report no mean/median; empty partitions report `n = 0`.
pub fn partition_consistency_stats(samples: &[PairedScore]) -> [PartitionRow; 4] {
    OraclePartition::ALL.map(|partition| {
        let mut values: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for s in samples {
            if OraclePartition::from_correctness(s.a_correct, s.b_correct) == partition {
                n += 1;
                if let Some(c) = s.a_consistency {
                    values.push(c);
                }
            }
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite consistency"));
        let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
        let median = (!values.is_empty()).then(|| median_of_sorted(&values));
        PartitionRow {
            partition,
            n,
            mean_consistency: mean,
            median_consistency: median,
        }
    })
}

// Even-count median is the mean of the two central order statistics.
fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Metric computed within each group of a label dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupMetric {
    /// Reference-model accuracy within the group.
    Accuracy,
    /// Spearman rho of (consistency, correctness) within the group.
    Spearman,
    /// Fraction of paired samples where the other model's consistency is
    /// strictly lower than the reference model's.
    PreferredModelRate,
}

/// One sample as seen by [`grouped_report`]; the `a_` fields describe the
/// focal (reference) model, `b_consistency` the competing one.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSample {
    pub labels: GroupLabels,
    pub a_correct: bool,
    pub a_consistency: Option<f64>,
    pub b_consistency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub label: String,
    pub n: usize,
    pub value: Option<f64>,
    /// Populated for the Spearman metric only.
    pub p_value: Option<f64>,
}

/// Compute `metric` within each label group of `dimension`
/// (category / os / application). Rows are sorted by label.
pub fn grouped_report(
    samples: &[GroupedSample],
    dimension: &str,
    metric: GroupMetric,
) -> Result<Vec<GroupRow>, MetricsError> {
    if !GroupLabels::DIMENSIONS.contains(&dimension) {
        return Err(MetricsError::UnknownDimension(dimension.to_string()));
    }
    let mut groups: BTreeMap<&str, Vec<&GroupedSample>> = BTreeMap::new();
    for s in samples {
        let label = s.labels.get(dimension).expect("dimension checked above");
        groups.entry(label).or_default().push(s);
    }
    let rows = groups
        .into_iter()
        .map(|(label, members)| {
            let n = members.len();
            let (value, p_value) = match metric {
                GroupMetric::Accuracy => {
                    let correct = members.iter().filter(|s| s.a_correct).count();
                    (Some(correct as f64 / n as f64), None)
                }
                GroupMetric::Spearman => {
                    let xs: Vec<f64> = members.iter().filter_map(|s| s.a_consistency).collect();
                    let ys: Vec<f64> = members
                        .iter()
                        .filter(|s| s.a_consistency.is_some())
                        .map(|s| if s.a_correct { 1.0 } else { 0.0 })
                        .collect();
                    match spearman(&xs, &ys) {
                        Ok(sp) => (Some(sp.rho), Some(sp.p_value)),
                        Err(_) => (None, None),
                    }
                }
                GroupMetric::PreferredModelRate => {
                    // Absent predictions never win the strict comparison.
                    let preferred = members
                        .iter()
                        .filter(|s| {
                            s.b_consistency.unwrap_or(f64::INFINITY)
                                < s.a_consistency.unwrap_or(f64::INFINITY)
                        })
                        .count();
                    (Some(preferred as f64 / n as f64), None)
                }
            };
            GroupRow {
                label: label.to_string(),
                n,
                value,
                p_value,
            }
        })
        .collect();
    Ok(rows)
}
