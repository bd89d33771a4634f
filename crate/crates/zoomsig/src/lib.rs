//! Toolkit for the zoom-consistency confidence signal of 2-step zoom-in
//! GUI grounding pipelines.
//!
//! A 2-step pipeline predicts a coarse location, zooms into a square crop
//! around it, and predicts again inside the crop. When the first step was
//! accurate, the second prediction lands near the crop center, so the
//! distance from the step-2 prediction to the center (the consistency
//! value) acts as a free confidence signal. This crate provides:
//!
//! - [`geometry`]: crop construction, coordinate maps, the consistency
//!   value, and point-in-box scoring;
//! - [`ingest`]: the JSONL pipeline-log schema, validation, and pairing of
//!   per-model runs into samples;
//! - [`metrics`]: AUC, Spearman correlation with significance, bucketed
//!   accuracy, and grouped slices;
//! - [`router`]: cross-model routing strategies on the signal and the
//!   improvement condition on disagreement sets;
//! - [`significance`]: exact McNemar and bootstrap tests for accuracy
//!   deltas;
//! - [`simulator`]: a synthetic pipeline with configurable error models
//!   for end-to-end validation;
//! - [`rng`]: seeded, order-independent random substreams.

pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod rng;
pub mod router;
pub mod significance;
pub mod simulator;

pub use geometry::{
    consistency, implied_step1_error, make_crop, BBox, CropBox, GeometryError, ParseStage, Point,
    ZoomTrace, CROP_CENTER, EXTENT, MAX_CONSISTENCY,
};
pub use ingest::{
    pair_models, parse_log, to_trace, write_jsonl, Diagnostic, GroupLabels, IngestError,
    LogRecord, PairedDataset, ParsedLog, SampleRecord,
};
pub use metrics::{
    auc_lower_score_positive, bucket_accuracy, correlation_report, grouped_report,
    partition_consistency_stats, spearman, BucketRow, CorrelationReport, GroupMetric, GroupRow,
    GroupedSample, MetricsError, OraclePartition, PairedScore, PartitionRow, ScoredSample,
    Spearman, DEFAULT_BUCKET_EDGES,
};
pub use router::{
    disagreement_stats, route, routing_condition, routing_condition_exact, ChoiceSource,
    ConfusionCounts, DisagreementStats, RouteResult, RoutedSample, RouterError, RoutingCondition,
    RoutingOutcome, Strategy,
};
pub use significance::{
    bootstrap_improvement, mcnemar_exact, BootstrapResult, SignificanceError,
};
pub use simulator::{
    simulate_dataset, simulate_trace, to_log_records, ErrorDist, LabelPools, MixtureComponent,
    OutOfCropBehavior, SimError, SimulatedSample, SimulationConfig, SyntheticModelConfig,
    TraceSample,
};
