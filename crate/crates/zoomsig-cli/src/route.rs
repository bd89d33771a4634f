//! `zoomsig route`: compare routing strategies over a paired two-model log.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use zoomsig::ingest::pair_models;
use zoomsig::metrics::OraclePartition;
use zoomsig::router::{
    disagreement_stats, route, routing_condition_exact, ConfusionCounts, RouteResult, RouterError,
    Strategy,
};
use zoomsig::significance::{bootstrap_improvement, mcnemar_exact};

use crate::report::{AppDelta, Payload, Report, RoutingReport, SkippedStrategy};
use crate::util::{data, read_logs, resolve_models, usage, CliError};

const DEFAULT_STRATEGIES: &str =
    "consistency,single:A,single:B,midpoint,vote-agree,stage-split,oracle";

#[derive(Debug, Args)]
pub struct RouteArgs {
    /// Input JSONL log; repeat for split per-model logs
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,

    /// Reference model (defaults to the first model in the log)
    #[arg(long)]
    pub model_a: Option<String>,

    /// Competing model (defaults to the second model)
    #[arg(long)]
    pub model_b: Option<String>,

    /// RNG seed for the bootstrap
    #[arg(long)]
    pub seed: u64,

    /// Bootstrap resampling iterations
    #[arg(long, default_value_t = 10_000)]
    pub iterations: u64,

    /// Strategies to evaluate (see `vote-agree:40` for a custom distance)
    #[arg(long, value_delimiter = ',', default_value = DEFAULT_STRATEGIES)]
    pub strategies: Vec<String>,

    /// Agreement distance for bare `vote-agree`
    #[arg(long)]
    pub vote_distance: Option<f64>,

    /// JSON report path
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Markdown report path
    #[arg(long)]
    pub md: Option<PathBuf>,
}

pub fn run(args: &RouteArgs) -> Result<(), CliError> {
    if args.iterations == 0 {
        return Err(usage("--iterations must be at least 1"));
    }
    let strategies = parse_strategies(args)?;

    let logs = read_logs(&args.inputs)?;
    let (model_a, model_b) =
        resolve_models(&logs.records, args.model_a.clone(), args.model_b.clone())?;
    let model_b = model_b.ok_or_else(|| {
        data(format!("routing needs two models; the log only contains `{model_a}`"))
    })?;
    let dataset =
        pair_models(&logs.records, &model_a, &model_b).map_err(|e| data(e.to_string()))?;
    let samples = &dataset.samples;

    let consistency = route(samples, &model_a, &model_b, &Strategy::Consistency)
        .map_err(|e| data(e.to_string()))?;
    let mut outcomes = Vec::new();
    let mut skipped = Vec::new();
    for strategy in &strategies {
        match route(samples, &model_a, &model_b, strategy) {
            Ok(res) => outcomes.push(res.outcome),
            Err(RouterError::StrategyUnavailable { strategy, reason }) => {
                skipped.push(SkippedStrategy { strategy, reason })
            }
            Err(e) => return Err(data(e.to_string())),
        }
    }

    let counts = ConfusionCounts::from_samples(samples, &model_a, &model_b);
    let kept = on_partition(&consistency, OraclePartition::OnlyA);
    let picked = on_partition(&consistency, OraclePartition::OnlyB);
    let condition = routing_condition_exact(&counts, kept, picked);

    let mut notes = Vec::new();
    let disagreement = match disagreement_stats(&counts, &consistency.choices) {
        Ok(stats) => Some(stats),
        Err(e) => {
            notes.push(format!("disagreement stats unavailable: {e}"));
            None
        }
    };
    if !logs.diagnostics.is_empty() || !dataset.diagnostics.is_empty() {
        notes.push(format!(
            "{} input diagnostics",
            logs.diagnostics.len() + dataset.diagnostics.len()
        ));
    }

    let outcome = &consistency.outcome;
    let mcnemar_p = mcnemar_exact(outcome.gains, outcome.losses);
    let pairs: Vec<(bool, bool)> = samples
        .iter()
        .zip(&consistency.choices)
        .map(|(s, c)| (c.correct, s.is_correct(&model_a)))
        .collect();
    let bootstrap = bootstrap_improvement(&pairs, args.iterations, args.seed)
        .map_err(|e| data(e.to_string()))?;

    let echo = serde_json::json!({
        "model_a": model_a,
        "model_b": model_b,
        "strategies": strategies.iter().map(|s| s.label()).collect::<Vec<_>>(),
        "iterations": args.iterations,
    });
    let payload = Payload::Route(Box::new(RoutingReport {
        model_a: model_a.clone(),
        model_b,
        n: counts.total(),
        counts,
        accuracy_a: counts.accuracy_a(),
        accuracy_b: counts.accuracy_b(),
        oracle_accuracy: counts.oracle_accuracy(),
        strategies: outcomes,
        skipped,
        condition,
        disagreement,
        mcnemar_p,
        bootstrap,
        application_deltas: application_deltas(&dataset.samples, &consistency, &model_a),
        notes,
    }));
    let report = Report::new(Some(args.seed), logs.inputs, echo, payload);
    crate::util::emit(&report, args.out.as_deref(), args.md.as_deref())
}

fn parse_strategies(args: &RouteArgs) -> Result<Vec<Strategy>, CliError> {
    args.strategies
        .iter()
        .map(|s| {
            if s == "vote-agree" {
                if let Some(distance) = args.vote_distance {
                    if !(distance.is_finite() && distance > 0.0) {
                        return Err(usage(format!(
                            "--vote-distance must be positive, got {distance}"
                        )));
                    }
                    return Ok(Strategy::VoteAgree { distance });
                }
            }
            s.parse::<Strategy>().map_err(usage)
        })
        .collect()
}

fn on_partition(run: &RouteResult, partition: OraclePartition) -> u64 {
    run.choices
        .iter()
        .filter(|c| c.partition == partition && c.correct)
        .count() as u64
}

fn application_deltas(
    samples: &[zoomsig::ingest::SampleRecord],
    consistency: &RouteResult,
    model_a: &str,
) -> Vec<AppDelta> {
    let mut groups: BTreeMap<&str, (u64, u64, u64)> = BTreeMap::new();
    for (s, c) in samples.iter().zip(&consistency.choices) {
        let entry = groups.entry(s.labels.application.as_str()).or_default();
        entry.0 += 1;
        entry.1 += u64::from(s.is_correct(model_a));
        entry.2 += u64::from(c.correct);
    }
    let mut rows: Vec<AppDelta> = groups
        .into_iter()
        .map(|(app, (n, a_hits, r_hits))| {
            let accuracy_a = a_hits as f64 / n as f64;
            let accuracy_router = r_hits as f64 / n as f64;
            AppDelta {
                application: app.to_string(),
                n,
                accuracy_a,
                accuracy_router,
                delta: accuracy_router - accuracy_a,
            }
        })
        .collect();
    rows.sort_by(|x, y| {
        y.delta
            .partial_cmp(&x.delta)
            .expect("finite deltas")
            .then_with(|| x.application.cmp(&y.application))
    });
    rows
}
