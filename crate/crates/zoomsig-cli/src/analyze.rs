//! `zoomsig analyze`: correlation, bucket, partition, and group tables
//! for one or two models in a pipeline log.

use std::path::PathBuf;

use clap::Args;
use zoomsig::ingest::{pair_models, Diagnostic, GroupLabels, SampleRecord};
use zoomsig::metrics::{
    bucket_accuracy, correlation_report, grouped_report, partition_consistency_stats, GroupMetric,
    GroupedSample, PairedScore, ScoredSample, DEFAULT_BUCKET_EDGES,
};

use crate::report::{
    AnalysisReport, GroupStatRow, GroupTable, ModelAnalysis, PartitionBlock, Payload, Report,
    StatBlock,
};
use crate::util::{data, read_logs, resolve_models, usage, CliError};

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Input JSONL log; repeat for split per-model logs
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,

    /// Reference model (defaults to the first model in the log)
    #[arg(long)]
    pub model_a: Option<String>,

    /// Competing model (defaults to the second model, when present)
    #[arg(long)]
    pub model_b: Option<String>,

    /// Consistency bucket edges, ascending
    #[arg(long, value_delimiter = ',')]
    pub buckets: Option<Vec<f64>>,

    /// Label dimensions for grouped slices
    #[arg(long, value_delimiter = ',', default_value = "category,os,application")]
    pub group_by: Vec<String>,

    /// JSON report path
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Markdown report path
    #[arg(long)]
    pub md: Option<PathBuf>,
}

pub fn run(args: &AnalyzeArgs) -> Result<(), CliError> {
    let edges = match &args.buckets {
        Some(edges) => {
            if edges.is_empty()
                || edges.iter().any(|e| !e.is_finite())
                || edges.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(usage("--buckets must be finite and strictly ascending"));
            }
            edges.clone()
        }
        None => DEFAULT_BUCKET_EDGES.to_vec(),
    };
    for dim in &args.group_by {
        if !GroupLabels::DIMENSIONS.contains(&dim.as_str()) {
            return Err(usage(format!(
                "unknown --group-by dimension `{dim}`; expected one of {}",
                GroupLabels::DIMENSIONS.join(", ")
            )));
        }
    }

    let logs = read_logs(&args.inputs)?;
    let (model_a, model_b) =
        resolve_models(&logs.records, args.model_a.clone(), args.model_b.clone())?;
    let pair_b = model_b.clone().unwrap_or_else(|| model_a.clone());
    let dataset = pair_models(&logs.records, &model_a, &pair_b).map_err(|e| data(e.to_string()))?;

    let mut notes = notes_from_diagnostics(&logs.diagnostics, &dataset.diagnostics);
    let mut model_names = vec![model_a.clone()];
    if let Some(b) = &model_b {
        model_names.push(b.clone());
    }

    let both: Vec<&SampleRecord> = dataset.both_parseable();
    let mut models = Vec::new();
    for name in &model_names {
        let full_scored = scored(&dataset.samples, name);
        let buckets = bucket_accuracy(&full_scored, &edges).map_err(|e| data(e.to_string()))?;
        let both_block = model_b.as_ref().map(|_| {
            let scored: Vec<ScoredSample> = both
                .iter()
                .filter_map(|s| {
                    s.consistency(name)
                        .map(|c| ScoredSample::new(c, s.is_correct(name)))
                })
                .collect();
            stat_block(&scored)
        });
        models.push(ModelAnalysis {
            model: name.clone(),
            full: stat_block(&full_scored),
            both_parseable: both_block,
            bucket_edges: edges.clone(),
            buckets,
        });
    }

    let partitions = match &model_b {
        Some(b) => {
            let paired: Vec<PairedScore> = dataset
                .samples
                .iter()
                .map(|s| PairedScore {
                    a_correct: s.is_correct(&model_a),
                    b_correct: s.is_correct(b),
                    a_consistency: s.consistency(&model_a),
                })
                .collect();
            Some(PartitionBlock {
                model_a: model_a.clone(),
                model_b: b.clone(),
                rows: partition_consistency_stats(&paired).to_vec(),
            })
        }
        None => {
            notes.push("partition table omitted: requires two models".to_string());
            None
        }
    };

    let mut groups = Vec::new();
    for dim in &args.group_by {
        for name in &model_names {
            let grouped: Vec<GroupedSample> = dataset
                .samples
                .iter()
                .map(|s| GroupedSample {
                    labels: s.labels.clone(),
                    a_correct: s.is_correct(name),
                    a_consistency: s.consistency(name),
                    b_consistency: other_consistency(s, name, &model_names),
                })
                .collect();
            let accuracy = grouped_report(&grouped, dim, GroupMetric::Accuracy)
                .map_err(|e| data(e.to_string()))?;
            let spearman = grouped_report(&grouped, dim, GroupMetric::Spearman)
                .map_err(|e| data(e.to_string()))?;
            let rows = accuracy
                .into_iter()
                .zip(spearman)
                .map(|(acc, sp)| {
                    debug_assert_eq!(acc.label, sp.label);
                    GroupStatRow {
                        label: acc.label,
                        n: acc.n,
                        accuracy: acc.value,
                        spearman_rho: sp.value,
                        p_value: sp.p_value,
                    }
                })
                .collect();
            groups.push(GroupTable {
                dimension: dim.clone(),
                model: name.clone(),
                rows,
            });
        }
    }

    let echo = serde_json::json!({
        "model_a": model_a,
        "model_b": model_b,
        "buckets": edges,
        "group_by": args.group_by,
    });
    let payload = Payload::Analyze(Box::new(AnalysisReport {
        models,
        partitions,
        groups,
        notes,
    }));
    let report = Report::new(None, logs.inputs, echo, payload);
    crate::util::emit(&report, args.out.as_deref(), args.md.as_deref())
}

fn scored(samples: &[SampleRecord], model: &str) -> Vec<ScoredSample> {
    samples
        .iter()
        .filter_map(|s| {
            s.consistency(model)
                .map(|c| ScoredSample::new(c, s.is_correct(model)))
        })
        .collect()
}

fn stat_block(scored: &[ScoredSample]) -> StatBlock {
    match correlation_report(scored) {
        Ok(stats) => StatBlock {
            n: scored.len(),
            stats: Some(stats),
            note: None,
        },
        Err(e) => StatBlock {
            n: scored.len(),
            stats: None,
            note: Some(e.to_string()),
        },
    }
}

fn other_consistency(s: &SampleRecord, name: &str, model_names: &[String]) -> Option<f64> {
    model_names
        .iter()
        .find(|m| m.as_str() != name)
        .and_then(|other| s.consistency(other))
}

fn notes_from_diagnostics(ingest: &[Diagnostic], pairing: &[Diagnostic]) -> Vec<String> {
    let mut notes = Vec::new();
    let total = ingest.len() + pairing.len();
    if total > 0 {
        notes.push(format!("{total} input diagnostics"));
        for d in ingest.iter().chain(pairing).take(5) {
            match d.line {
                Some(line) => notes.push(format!("line {line}: {}", d.message)),
                None => notes.push(d.message.clone()),
            }
        }
        if total > 5 {
            notes.push(format!("... and {} more", total - 5));
        }
    }
    notes
}
