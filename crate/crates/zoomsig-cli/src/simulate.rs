//! `zoomsig simulate`: generate a synthetic pipeline log.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use zoomsig::ingest::write_jsonl;
use zoomsig::simulator::{simulate_dataset, to_log_records, SimulatedSample, SimulationConfig};

use crate::report::{InputDigest, Payload, Report, SimModelSummary, SimulateSummary};
use crate::util::{data, sha256_hex, usage, write_atomic, CliError};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config JSON; defaults to the built-in two-model recipe
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Number of samples to generate
    #[arg(long)]
    pub n: u64,

    /// RNG seed; the same seed reproduces the dataset byte for byte
    #[arg(long)]
    pub seed: u64,

    /// Output dataset path (JSONL, one record per sample and trace)
    #[arg(long)]
    pub out: PathBuf,

    /// Optional JSON summary report path
    #[arg(long)]
    pub summary: Option<PathBuf>,

    /// Optional markdown summary path
    #[arg(long)]
    pub md: Option<PathBuf>,

    /// Override every model's crop ratio
    #[arg(long)]
    pub r: Option<f64>,

    /// Override the ground-truth box half size
    #[arg(long)]
    pub gt_half_size: Option<f64>,

    /// Override the target sampling margin
    #[arg(long)]
    pub target_margin: Option<f64>,
}

pub fn run(args: &SimulateArgs) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let mut inputs = Vec::new();
    let mut config = match &args.config {
        Some(path) => {
            let bytes = fs::read(path)
                .map_err(|e| data(format!("cannot read `{}`: {e}", path.display())))?;
            inputs.push(InputDigest {
                path: path.display().to_string(),
                sha256: sha256_hex(&bytes),
            });
            let config: SimulationConfig = serde_json::from_slice(&bytes)
                .map_err(|e| data(format!("`{}`: invalid config: {e}", path.display())))?;
            config
                .validate()
                .map_err(|e| data(format!("`{}`: {e}", path.display())))?;
            config
        }
        None => SimulationConfig::default_two_model(),
    };
    apply_overrides(&mut config, args);
    config.validate().map_err(|e| usage(e.to_string()))?;

    let samples = simulate_dataset(&config, args.n, args.seed).map_err(|e| data(e.to_string()))?;
    let records = to_log_records(&samples, &config);
    let mut jsonl = Vec::new();
    write_jsonl(&mut jsonl, &records).map_err(|e| data(format!("serialize dataset: {e}")))?;
    write_atomic(&args.out, &jsonl)?;

    let summary = summarize(&samples, &config, args, records.len() as u64);
    let echo = serde_json::json!({ "n": args.n, "simulation": config });
    let report = Report::new(Some(args.seed), inputs, echo, Payload::Simulate(Box::new(summary)));
    crate::util::emit(&report, args.summary.as_deref(), args.md.as_deref())
}

fn apply_overrides(config: &mut SimulationConfig, args: &SimulateArgs) {
    if let Some(r) = args.r {
        for model in &mut config.models {
            model.r = r;
        }
    }
    if let Some(h) = args.gt_half_size {
        config.gt_half_size = h;
    }
    if let Some(m) = args.target_margin {
        config.target_margin = m;
    }
}

fn summarize(
    samples: &[SimulatedSample],
    config: &SimulationConfig,
    args: &SimulateArgs,
    records_written: u64,
) -> SimulateSummary {
    let mut keys: Vec<String> = config.models.iter().map(|m| m.name.clone()).collect();
    if config.emit_stage_split && config.models.len() >= 2 {
        keys.push(format!("{}->{}", config.models[0].name, config.models[1].name));
    }
    let n = samples.len() as f64;
    let models = keys
        .into_iter()
        .map(|key| {
            let correct = samples.iter().filter(|s| s.record.is_correct(&key)).count();
            let truths = samples.iter().filter_map(|s| s.ground_truth.get(&key));
            let clipped = truths
                .clone()
                .filter(|t| t.trace.crop.as_ref().is_some_and(|c| c.clipped))
                .count();
            let out_of_crop = truths.clone().filter(|t| t.out_of_crop).count();
            let consistency_sum: f64 = truths.filter_map(|t| t.trace.consistency).sum();
            SimModelSummary {
                model: key,
                accuracy: correct as f64 / n,
                clip_rate: clipped as f64 / n,
                out_of_crop_rate: out_of_crop as f64 / n,
                mean_consistency: consistency_sum / n,
            }
        })
        .collect();
    SimulateSummary {
        n: samples.len() as u64,
        output: args.out.display().to_string(),
        records_written,
        models,
    }
}
