//! Cross-model routing on the consistency signal: confusion counts,
//! routing strategies with per-sample choices, the improvement condition
//! on disagreement sets, and disagreement-set statistics.

use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

use crate::geometry::Point;
use crate::ingest::SampleRecord;
use crate::metrics::OraclePartition;

#[derive(Debug, Error, PartialEq)]
pub enum RouterError {
    #[error("no samples to route")]
    EmptyDataset,
    #[error("strategy `{strategy}` unavailable: {reason}")]
    StrategyUnavailable { strategy: String, reason: String },
    #[error("disagreement set is empty")]
    EmptyDisagreement,
}

/// Paired correctness counts: `n11` both correct, `n10` only model A,
/// `n01` only model B, `n00` neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl ConfusionCounts {
    pub fn new(n11: u64, n10: u64, n01: u64, n00: u64) -> Self {
        Self { n11, n10, n01, n00 }
    }

    pub fn from_samples(samples: &[SampleRecord], model_a: &str, model_b: &str) -> Self {
        let mut counts = Self::new(0, 0, 0, 0);
        for s in samples {
            let cell = match (s.is_correct(model_a), s.is_correct(model_b)) {
                (true, true) => &mut counts.n11,
                (true, false) => &mut counts.n10,
                (false, true) => &mut counts.n01,
                (false, false) => &mut counts.n00,
            };
            *cell += 1;
        }
        counts
    }

    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    pub fn count(&self, partition: OraclePartition) -> u64 {
        match partition {
            OraclePartition::BothCorrect => self.n11,
            OraclePartition::OnlyA => self.n10,
            OraclePartition::OnlyB => self.n01,
            OraclePartition::BothWrong => self.n00,
        }
    }

    pub fn accuracy_a(&self) -> f64 {
        (self.n11 + self.n10) as f64 / self.total() as f64
    }

    pub fn accuracy_b(&self) -> f64 {
        (self.n11 + self.n01) as f64 / self.total() as f64
    }

    /// Accuracy of a router that always picks a correct model when one
    /// exists: the routing upper bound.
    pub fn oracle_accuracy(&self) -> f64 {
        (self.n11 + self.n10 + self.n01) as f64 / self.total() as f64
    }

    /// Size of the disagreement set D = S10 u S01.
    pub fn disagreement(&self) -> u64 {
        self.n10 + self.n01
    }
}

/// How a final prediction is chosen per sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Pick the model with the lower consistency value; ties and missing
    /// values favor model A (missing counts as +infinity).
    Consistency,
    SingleA,
    SingleB,
    /// Mean of both final predictions.
    Midpoint,
    /// Model A when the finals agree within `distance`, else midpoint.
    VoteAgree { distance: f64 },
    /// Hybrid traces replaying model A's crop with model B's step 2.
    StageSplit,
    /// Upper bound: always pick a correct model when one exists.
    Oracle,
}

pub const DEFAULT_VOTE_AGREE_DISTANCE: f64 = 50.0;

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::Consistency => "consistency".into(),
            Strategy::SingleA => "single:A".into(),
            Strategy::SingleB => "single:B".into(),
            Strategy::Midpoint => "midpoint".into(),
            Strategy::VoteAgree { distance } => format!("vote-agree({distance})"),
            Strategy::StageSplit => "stage-split".into(),
            Strategy::Oracle => "oracle".into(),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    /// Accepts the labels above; `vote-agree` takes an optional distance
    /// as `vote-agree:40`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "consistency" => return Ok(Strategy::Consistency),
            "single:A" | "single:a" => return Ok(Strategy::SingleA),
            "single:B" | "single:b" => return Ok(Strategy::SingleB),
            "midpoint" => return Ok(Strategy::Midpoint),
            "stage-split" => return Ok(Strategy::StageSplit),
            "oracle" => return Ok(Strategy::Oracle),
            "vote-agree" => {
                return Ok(Strategy::VoteAgree {
                    distance: DEFAULT_VOTE_AGREE_DISTANCE,
                })
            }
            _ => {}
        }
        if let Some(arg) = s.strip_prefix("vote-agree:") {
            let distance: f64 = arg
                .parse()
                .map_err(|_| format!("bad vote-agree distance `{arg}`"))?;
            if !(distance.is_finite() && distance > 0.0) {
                return Err(format!("vote-agree distance must be positive, got {distance}"));
            }
            return Ok(Strategy::VoteAgree { distance });
        }
        Err(format!("unknown strategy `{s}`"))
    }
}

/// Which prediction the router emitted for a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceSource {
    ModelA,
    ModelB,
    /// Combination of both finals (midpoint).
    Fused,
    /// Stage-split hybrid trace.
    Hybrid,
    /// No prediction available.
    None,
}

/// Router decision on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutedSample {
    pub source: ChoiceSource,
    pub final_point: Option<Point>,
    pub correct: bool,
    pub partition: OraclePartition,
}

/// Aggregate routing result against the model-A baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingOutcome {
    pub strategy: String,
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
    /// Model A accuracy on the same samples.
    pub baseline_accuracy: f64,
    pub delta_vs_baseline: f64,
    /// Samples the router got right where model A was wrong.
    pub gains: u64,
    /// Samples the router got wrong where model A was right.
    pub losses: u64,
    /// Realized correctness rate on S10 (only A correct).
    pub f10: Option<f64>,
    /// Realized correctness rate on S01 (only B correct).
    pub f01: Option<f64>,
    /// Net recovered fraction of S01: (gains - losses) / n01.
    pub eta: Option<f64>,
}

pub struct RouteResult {
    pub outcome: RoutingOutcome,
    /// Per-sample choices, index-aligned with the routed samples.
    pub choices: Vec<RoutedSample>,
}

/// Route every sample and aggregate against the model-A baseline.
pub fn route(
    samples: &[SampleRecord],
    model_a: &str,
    model_b: &str,
    strategy: &Strategy,
) -> Result<RouteResult, RouterError> {
    if samples.is_empty() {
        return Err(RouterError::EmptyDataset);
    }
    let hybrid_key = format!("{model_a}->{model_b}");
    if *strategy == Strategy::StageSplit && !samples.iter().any(|s| s.traces.contains_key(&hybrid_key))
    {
        return Err(RouterError::StrategyUnavailable {
            strategy: strategy.label(),
            reason: format!("no `{hybrid_key}` traces in the dataset"),
        });
    }
    let choices: Vec<RoutedSample> = samples
        .iter()
        .map(|s| choose(s, model_a, model_b, strategy, &hybrid_key))
        .collect();
    let counts = ConfusionCounts::from_samples(samples, model_a, model_b);
    let n = samples.len() as u64;
    let correct = choices.iter().filter(|c| c.correct).count() as u64;
    let accuracy = correct as f64 / n as f64;
    let baseline_accuracy = counts.accuracy_a();
    let gains = choices
        .iter()
        .filter(|c| {
            c.correct
                && matches!(
                    c.partition,
                    OraclePartition::OnlyB | OraclePartition::BothWrong
                )
        })
        .count() as u64;
    let losses = choices
        .iter()
        .filter(|c| {
            !c.correct
                && matches!(
                    c.partition,
                    OraclePartition::BothCorrect | OraclePartition::OnlyA
                )
        })
        .count() as u64;
    let rate_on = |partition: OraclePartition| {
        let total = counts.count(partition);
        (total > 0).then(|| {
            let hits = choices
                .iter()
                .filter(|c| c.partition == partition && c.correct)
                .count() as u64;
            hits as f64 / total as f64
        })
    };
    let f10 = rate_on(OraclePartition::OnlyA);
    let f01 = rate_on(OraclePartition::OnlyB);
    let eta = (counts.n01 > 0).then(|| (gains as f64 - losses as f64) / counts.n01 as f64);
    Ok(RouteResult {
        outcome: RoutingOutcome {
            strategy: strategy.label(),
            n,
            correct,
            accuracy,
            baseline_accuracy,
            delta_vs_baseline: accuracy - baseline_accuracy,
            gains,
            losses,
            f10,
            f01,
            eta,
        },
        choices,
    })
}

fn choose(
    sample: &SampleRecord,
    model_a: &str,
    model_b: &str,
    strategy: &Strategy,
    hybrid_key: &str,
) -> RoutedSample {
    let partition =
        OraclePartition::from_correctness(sample.is_correct(model_a), sample.is_correct(model_b));
    let pick = |source: ChoiceSource, model: &str| RoutedSample {
        source,
        final_point: sample.final_point(model),
        correct: sample.is_correct(model),
        partition,
    };
    let fused = |mid: Point| RoutedSample {
        source: ChoiceSource::Fused,
        final_point: Some(mid),
        correct: sample.gt_bbox.contains(mid),
        partition,
    };
    let nothing = RoutedSample {
        source: ChoiceSource::None,
        final_point: None,
        correct: false,
        partition,
    };
    match strategy {
        Strategy::Consistency => {
            // Missing consistency means no prediction; +infinity loses to
            // any real value, and an all-missing tie stays on A.
            let ca = sample.consistency(model_a).unwrap_or(f64::INFINITY);
            let cb = sample.consistency(model_b).unwrap_or(f64::INFINITY);
            if ca <= cb {
                pick(ChoiceSource::ModelA, model_a)
            } else {
                pick(ChoiceSource::ModelB, model_b)
            }
        }
        Strategy::SingleA => pick(ChoiceSource::ModelA, model_a),
        Strategy::SingleB => pick(ChoiceSource::ModelB, model_b),
        Strategy::Midpoint => match (sample.final_point(model_a), sample.final_point(model_b)) {
            (Some(pa), Some(pb)) => {
                fused(Point::new((pa.x + pb.x) / 2.0, (pa.y + pb.y) / 2.0))
            }
            (Some(_), None) => pick(ChoiceSource::ModelA, model_a),
            (None, Some(_)) => pick(ChoiceSource::ModelB, model_b),
            (None, None) => nothing,
        },
        Strategy::VoteAgree { distance } => {
            match (sample.final_point(model_a), sample.final_point(model_b)) {
                (Some(pa), Some(pb)) => {
                    if pa.dist(pb) < *distance {
                        pick(ChoiceSource::ModelA, model_a)
                    } else {
                        fused(Point::new((pa.x + pb.x) / 2.0, (pa.y + pb.y) / 2.0))
                    }
                }
                (Some(_), None) => pick(ChoiceSource::ModelA, model_a),
                (None, Some(_)) => pick(ChoiceSource::ModelB, model_b),
                (None, None) => nothing,
            }
        }
        Strategy::StageSplit => {
            if sample.traces.contains_key(hybrid_key) {
                pick(ChoiceSource::Hybrid, hybrid_key)
            } else {
                nothing
            }
        }
        Strategy::Oracle => {
            if sample.is_correct(model_a) {
                pick(ChoiceSource::ModelA, model_a)
            } else if sample.is_correct(model_b) {
                pick(ChoiceSource::ModelB, model_b)
            } else {
                pick(ChoiceSource::ModelA, model_a)
            }
        }
    }
}

/// Expected-improvement condition for a router with retention rate `f10`
/// on S10 and recovery rate `f01` on S01: routing beats the model-A
/// baseline iff `f01 * n01 > (1 - f10) * n10`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingCondition {
    pub improves: bool,
    /// Expected recovered samples: f01 * n01.
    pub expected_gain: f64,
    /// Expected forfeited samples: (1 - f10) * n10.
    pub expected_loss: f64,
}

pub fn routing_condition(counts: &ConfusionCounts, f10: f64, f01: f64) -> RoutingCondition {
    let expected_gain = f01 * counts.n01 as f64;
    let expected_loss = (1.0 - f10) * counts.n10 as f64;
    RoutingCondition {
        improves: expected_gain > expected_loss,
        expected_gain,
        expected_loss,
    }
}

/// Integer form of the improvement condition for realized routing counts:
/// with `kept_in_s10` samples of S10 routed to A and `picked_in_s01`
/// samples of S01 routed to B, accuracy improves iff
/// `picked_in_s01 > n10 - kept_in_s10`. Exact at the equality boundary
/// where the float form could round.
pub fn routing_condition_exact(
    counts: &ConfusionCounts,
    kept_in_s10: u64,
    picked_in_s01: u64,
) -> RoutingCondition {
    debug_assert!(kept_in_s10 <= counts.n10 && picked_in_s01 <= counts.n01);
    let lost = counts.n10 - kept_in_s10;
    RoutingCondition {
        improves: picked_in_s01 > lost,
        expected_gain: picked_in_s01 as f64,
        expected_loss: lost as f64,
    }
}

/// Disagreement-set summary for a routing run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisagreementStats {
    /// |D| = n10 + n01.
    pub n_disagree: u64,
    /// Base rate of "B is the correct side" within D: n01 / |D|.
    pub pi: f64,
    /// Precision over base rate needed to break even: 0.5 / pi.
    /// `None` when pi = 0.
    pub required_lift: Option<f64>,
    /// Disagreement samples the router sent to model B.
    pub b_selected: u64,
    pub b_selected_correct: u64,
    /// b_selected_correct / b_selected; `None` without B-selections.
    pub precision_b: Option<f64>,
}

/// Summarize how a routing run behaved on the disagreement set.
/// `choices` must come from a [`route`] call on the same samples.
pub fn disagreement_stats(
    counts: &ConfusionCounts,
    choices: &[RoutedSample],
) -> Result<DisagreementStats, RouterError> {
    let n_disagree = counts.disagreement();
    if n_disagree == 0 {
        return Err(RouterError::EmptyDisagreement);
    }
    let pi = counts.n01 as f64 / n_disagree as f64;
    let in_d = |c: &&RoutedSample| {
        matches!(
            c.partition,
            OraclePartition::OnlyA | OraclePartition::OnlyB
        )
    };
    let b_selected = choices
        .iter()
        .filter(in_d)
        .filter(|c| c.source == ChoiceSource::ModelB)
        .count() as u64;
    let b_selected_correct = choices
        .iter()
        .filter(in_d)
        .filter(|c| c.source == ChoiceSource::ModelB && c.correct)
        .count() as u64;
    Ok(DisagreementStats {
        n_disagree,
        pi,
        required_lift: (pi > 0.0).then(|| 0.5 / pi),
        b_selected,
        b_selected_correct,
        precision_b: (b_selected > 0).then(|| b_selected_correct as f64 / b_selected as f64),
    })
}
