//! Report envelope shared by every subcommand, plus markdown rendering.
//!
//! Reports are stored as JSON at full float precision; the markdown view
//! shows the same values rounded to 4 significant digits. Rendering is a
//! pure function of the parsed report, so `zoomsig report` reproduces the
//! markdown byte for byte from the stored JSON.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use zoomsig::metrics::{BucketRow, CorrelationReport, PartitionRow};
use zoomsig::router::{ConfusionCounts, DisagreementStats, RoutingCondition, RoutingOutcome};
use zoomsig::significance::BootstrapResult;

use crate::util::{data, write_atomic, CliError};

pub const SCHEMA: &str = "zoomsig-report/1";

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Stored JSON report to re-render
    #[arg(long)]
    pub input: PathBuf,

    /// Markdown output path (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `zoomsig report`: re-render a stored JSON report as markdown.
pub fn rerender(args: &ReportArgs) -> Result<(), CliError> {
    let bytes = fs::read(&args.input)
        .map_err(|e| data(format!("cannot read `{}`: {e}", args.input.display())))?;
    let report: Report = serde_json::from_slice(&bytes)
        .map_err(|e| data(format!("`{}`: not a zoomsig report: {e}", args.input.display())))?;
    if report.schema != SCHEMA {
        return Err(data(format!(
            "`{}`: unsupported schema `{}` (expected `{SCHEMA}`)",
            args.input.display(),
            report.schema
        )));
    }
    let markdown = render_markdown(&report);
    match &args.out {
        Some(path) => write_atomic(path, markdown.as_bytes())?,
        None => print!("{markdown}"),
    }
    Ok(())
}

/// One input file with its content digest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Envelope written by every subcommand: schema version, the seed for
/// randomized runs, input digests, the effective configuration, and the
/// command-specific payload.
#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub config: serde_json::Value,
    #[serde(flatten)]
    pub payload: Payload,
}

impl Report {
    pub fn new(
        seed: Option<u64>,
        inputs: Vec<InputDigest>,
        config: serde_json::Value,
        payload: Payload,
    ) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            seed,
            inputs,
            config,
            payload,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Payload {
    Simulate(Box<SimulateSummary>),
    Analyze(Box<AnalysisReport>),
    Route(Box<RoutingReport>),
}

/// Summary of a generated dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub n: u64,
    pub output: String,
    pub records_written: u64,
    pub models: Vec<SimModelSummary>,
}

/// Ground-truth statistics of one simulated model (or hybrid trace).
#[derive(Debug, Serialize, Deserialize)]
pub struct SimModelSummary {
    pub model: String,
    pub accuracy: f64,
    pub clip_rate: f64,
    pub out_of_crop_rate: f64,
    pub mean_consistency: f64,
}

/// Correlation / bucket / partition / group analysis of a log.
#[derive(Debug, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub models: Vec<ModelAnalysis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partitions: Option<PartitionBlock>,
    pub groups: Vec<GroupTable>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelAnalysis {
    pub model: String,
    /// Every sample where the model produced a final prediction.
    pub full: StatBlock,
    /// Restricted to samples where both models produced one; absent on
    /// single-model logs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub both_parseable: Option<StatBlock>,
    pub bucket_edges: Vec<f64>,
    pub buckets: Vec<BucketRow>,
}

/// AUC / Spearman cell; `stats` is absent when undefined on the subset
/// (for example all samples correct), with the reason in `note`.
#[derive(Debug, Serialize, Deserialize)]
pub struct StatBlock {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<CorrelationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PartitionBlock {
    pub model_a: String,
    pub model_b: String,
    pub rows: Vec<PartitionRow>,
}

/// Per-group accuracy and correlation for one (dimension, model) pair.
#[derive(Debug, Serialize, Deserialize)]
pub struct GroupTable {
    pub dimension: String,
    pub model: String,
    pub rows: Vec<GroupStatRow>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GroupStatRow {
    pub label: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spearman_rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

/// Routing comparison of two models over one paired dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct RoutingReport {
    pub model_a: String,
    pub model_b: String,
    pub n: u64,
    pub counts: ConfusionCounts,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    pub oracle_accuracy: f64,
    pub strategies: Vec<RoutingOutcome>,
    pub skipped: Vec<SkippedStrategy>,
    /// Improvement condition realized by the consistency router.
    pub condition: RoutingCondition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disagreement: Option<DisagreementStats>,
    /// Exact McNemar p for consistency routing vs the model-A baseline.
    pub mcnemar_p: f64,
    pub bootstrap: BootstrapResult,
    /// Consistency-vs-baseline accuracy delta per application, largest
    /// delta first.
    pub application_deltas: Vec<AppDelta>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SkippedStrategy {
    pub strategy: String,
    pub reason: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AppDelta {
    pub application: String,
    pub n: u64,
    pub accuracy_a: f64,
    pub accuracy_router: f64,
    pub delta: f64,
}

/// Format with 4 significant digits; scientific notation outside
/// [1e-6, 1e10) keeps tiny p-values readable.
pub fn sig4(v: f64) -> String {
    if v.is_nan() {
        return "NaN".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-6..10).contains(&mag) {
        return format!("{v:.3e}");
    }
    let prec = (3 - mag).max(0) as usize;
    format!("{v:.prec$}")
}

fn opt(v: Option<f64>) -> String {
    v.map(sig4).unwrap_or_else(|| "-".to_string())
}

pub fn render_markdown(report: &Report) -> String {
    let mut md = String::new();
    let kind = match &report.payload {
        Payload::Simulate(_) => "simulate",
        Payload::Analyze(_) => "analyze",
        Payload::Route(_) => "route",
    };
    push(&mut md, format!("# zoomsig {kind} report"));
    push(&mut md, String::new());
    push(&mut md, format!("- schema: {}", report.schema));
    if let Some(seed) = report.seed {
        push(&mut md, format!("- seed: {seed}"));
    }
    for input in &report.inputs {
        push(&mut md, format!("- input: `{}` sha256:{}", input.path, input.sha256));
    }
    push(&mut md, String::new());
    push(&mut md, "## Configuration".to_string());
    push(&mut md, String::new());
    push(&mut md, "```json".to_string());
    push(
        &mut md,
        serde_json::to_string_pretty(&report.config).expect("config serializes"),
    );
    push(&mut md, "```".to_string());
    match &report.payload {
        Payload::Simulate(s) => render_simulate(&mut md, s),
        Payload::Analyze(a) => render_analyze(&mut md, a),
        Payload::Route(r) => render_route(&mut md, r),
    }
    md
}

fn push(md: &mut String, line: String) {
    md.push_str(&line);
    md.push('\n');
}

fn render_simulate(md: &mut String, s: &SimulateSummary) {
    push(md, String::new());
    push(md, "## Dataset".to_string());
    push(md, String::new());
    push(md, format!("- samples: {}", s.n));
    push(md, format!("- records written: {}", s.records_written));
    push(md, format!("- output: `{}`", s.output));
    push(md, String::new());
    push(md, "## Models".to_string());
    push(md, String::new());
    push(
        md,
        "| model | accuracy | clip rate | out-of-crop rate | mean consistency |".to_string(),
    );
    push(md, "|---|---|---|---|---|".to_string());
    for m in &s.models {
        push(
            md,
            format!(
                "| {} | {} | {} | {} | {} |",
                m.model,
                sig4(m.accuracy),
                sig4(m.clip_rate),
                sig4(m.out_of_crop_rate),
                sig4(m.mean_consistency)
            ),
        );
    }
}

fn render_analyze(md: &mut String, a: &AnalysisReport) {
    push(md, String::new());
    push(md, "## Correlation by model".to_string());
    push(md, String::new());
    push(md, "| model | subset | n | AUC | rho | p-value |".to_string());
    push(md, "|---|---|---|---|---|---|".to_string());
    for m in &a.models {
        stat_row(md, &m.model, "all", &m.full);
        if let Some(block) = &m.both_parseable {
            stat_row(md, &m.model, "both-parseable", block);
        }
    }
    for m in &a.models {
        push(md, String::new());
        push(
            md,
            format!(
                "## Accuracy by consistency bucket: {} (edges {})",
                m.model,
                m.bucket_edges
                    .iter()
                    .map(|e| sig4(*e))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        );
        push(md, String::new());
        push(md, "| bucket | n | correct | accuracy |".to_string());
        push(md, "|---|---|---|---|".to_string());
        for b in &m.buckets {
            push(
                md,
                format!(
                    "| {} | {} | {} | {} |",
                    b.label,
                    b.n,
                    b.correct,
                    opt(b.accuracy)
                ),
            );
        }
    }
    if let Some(p) = &a.partitions {
        push(md, String::new());
        push(
            md,
            format!(
                "## Consistency of {} by outcome partition (A={}, B={})",
                p.model_a, p.model_a, p.model_b
            ),
        );
        push(md, String::new());
        push(md, "| partition | n | mean | median |".to_string());
        push(md, "|---|---|---|---|".to_string());
        for row in &p.rows {
            push(
                md,
                format!(
                    "| {} | {} | {} | {} |",
                    row.partition.label(),
                    row.n,
                    opt(row.mean_consistency),
                    opt(row.median_consistency)
                ),
            );
        }
    }
    for g in &a.groups {
        push(md, String::new());
        push(md, format!("## By {}: {}", g.dimension, g.model));
        push(md, String::new());
        push(md, format!("| {} | n | accuracy | rho | p-value |", g.dimension));
        push(md, "|---|---|---|---|---|".to_string());
        for row in &g.rows {
            push(
                md,
                format!(
                    "| {} | {} | {} | {} | {} |",
                    row.label,
                    row.n,
                    opt(row.accuracy),
                    opt(row.spearman_rho),
                    opt(row.p_value)
                ),
            );
        }
    }
    render_notes(md, &a.notes);
}

fn stat_row(md: &mut String, model: &str, subset: &str, block: &StatBlock) {
    match &block.stats {
        Some(stats) => push(
            md,
            format!(
                "| {} | {} | {} | {} | {} | {} |",
                model,
                subset,
                stats.n,
                sig4(stats.auc),
                sig4(stats.spearman_rho),
                sig4(stats.p_value)
            ),
        ),
        None => push(
            md,
            format!("| {} | {} | {} | - | - | - |", model, subset, block.n),
        ),
    }
}

fn render_route(md: &mut String, r: &RoutingReport) {
    push(md, String::new());
    push(md, "## Paired dataset".to_string());
    push(md, String::new());
    push(md, format!("- samples: {}", r.n));
    push(md, format!("- A: {}", r.model_a));
    push(md, format!("- B: {}", r.model_b));
    push(
        md,
        format!(
            "- partitions: S11 {}, S10 {}, S01 {}, S00 {}",
            r.counts.n11, r.counts.n10, r.counts.n01, r.counts.n00
        ),
    );
    push(
        md,
        format!(
            "- accuracy: A {}, B {}, oracle {}",
            sig4(r.accuracy_a),
            sig4(r.accuracy_b),
            sig4(r.oracle_accuracy)
        ),
    );
    push(md, String::new());
    push(md, "## Strategies".to_string());
    push(md, String::new());
    push(
        md,
        "| strategy | accuracy | delta vs A | gains | losses | f10 | f01 | eta |".to_string(),
    );
    push(md, "|---|---|---|---|---|---|---|---|".to_string());
    for s in &r.strategies {
        push(
            md,
            format!(
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                s.strategy,
                sig4(s.accuracy),
                sig4(s.delta_vs_baseline),
                s.gains,
                s.losses,
                opt(s.f10),
                opt(s.f01),
                opt(s.eta)
            ),
        );
    }
    for s in &r.skipped {
        push(md, String::new());
        push(md, format!("- {} skipped: {}", s.strategy, s.reason));
    }
    push(md, String::new());
    push(md, "## Improvement condition (consistency router)".to_string());
    push(md, String::new());
    push(
        md,
        format!("- recovered from S01: {}", sig4(r.condition.expected_gain)),
    );
    push(
        md,
        format!("- forfeited from S10: {}", sig4(r.condition.expected_loss)),
    );
    push(md, format!("- improves: {}", r.condition.improves));
    if let Some(d) = &r.disagreement {
        push(md, String::new());
        push(md, "## Disagreement set".to_string());
        push(md, String::new());
        push(md, format!("- size: {}", d.n_disagree));
        push(md, format!("- pi (B-correct share): {}", sig4(d.pi)));
        push(md, format!("- required precision lift: {}", opt(d.required_lift)));
        push(
            md,
            format!(
                "- routed to B: {} ({} correct, precision {})",
                d.b_selected,
                d.b_selected_correct,
                opt(d.precision_b)
            ),
        );
    }
    push(md, String::new());
    push(md, "## Significance (consistency vs single:A)".to_string());
    push(md, String::new());
    push(md, format!("- McNemar exact p: {}", sig4(r.mcnemar_p)));
    push(
        md,
        format!(
            "- bootstrap p_improve: {} ({} iterations, seed {})",
            sig4(r.bootstrap.p_improve),
            r.bootstrap.iterations,
            r.bootstrap.seed
        ),
    );
    push(
        md,
        format!(
            "- bootstrap delta: mean {}, 95% CI [{}, {}]",
            sig4(r.bootstrap.delta_mean),
            sig4(r.bootstrap.delta_ci.0),
            sig4(r.bootstrap.delta_ci.1)
        ),
    );
    push(md, String::new());
    push(md, "## Delta by application (consistency vs single:A)".to_string());
    push(md, String::new());
    push(md, "| application | n | accuracy A | accuracy router | delta |".to_string());
    push(md, "|---|---|---|---|---|".to_string());
    for row in &r.application_deltas {
        push(
            md,
            format!(
                "| {} | {} | {} | {} | {} |",
                row.application,
                row.n,
                sig4(row.accuracy_a),
                sig4(row.accuracy_router),
                sig4(row.delta)
            ),
        );
    }
    render_notes(md, &r.notes);
}

fn render_notes(md: &mut String, notes: &[String]) {
    if notes.is_empty() {
        return;
    }
    push(md, String::new());
    push(md, "## Notes".to_string());
    push(md, String::new());
    for note in notes {
        push(md, format!("- {note}"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig4_rounds_to_four_significant_digits() {
        assert_eq!(sig4(0.0), "0");
        assert_eq!(sig4(0.92304), "0.9230");
        assert_eq!(sig4(85.0727), "85.07");
        assert_eq!(sig4(1581.0), "1581");
        assert_eq!(sig4(-0.43216), "-0.4322");
        assert_eq!(sig4(0.00012344), "0.0001234");
        assert_eq!(sig4(1.2344e-45), "1.234e-45");
        assert_eq!(sig4(f64::NAN), "NaN");
    }

    #[test]
    fn envelope_round_trips_through_json() {
        let report = Report::new(
            Some(7),
            vec![InputDigest {
                path: "data.jsonl".into(),
                sha256: "ab".into(),
            }],
            serde_json::json!({"n": 3}),
            Payload::Simulate(Box::new(SimulateSummary {
                n: 3,
                output: "data.jsonl".into(),
                records_written: 9,
                models: vec![],
            })),
        );
        let json = report.to_json();
        let parsed: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.schema, SCHEMA);
        assert_eq!(parsed.seed, Some(7));
        assert_eq!(parsed.to_json(), json);
        assert_eq!(render_markdown(&parsed), render_markdown(&report));
    }
}
