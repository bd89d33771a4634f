//! JSONL pipeline-log ingestion: schema types, line-level validation with
//! diagnostics, reconstruction of zoom traces, and pairing per-model
//! records into scored samples.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{consistency, make_crop, BBox, CropBox, ParseStage, Point, ZoomTrace, EXTENT};

/// Grouping labels attached to every benchmark sample.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupLabels {
    pub category: String,
    pub os: String,
    pub application: String,
}

impl GroupLabels {
    pub const DIMENSIONS: [&'static str; 3] = ["category", "os", "application"];

    pub fn get(&self, dimension: &str) -> Option<&str> {
        match dimension {
            "category" => Some(&self.category),
            "os" => Some(&self.os),
            "application" => Some(&self.application),
            _ => None,
        }
    }
}

/// One line of a pipeline log: a single model's 2-step run on one sample.
///
/// Coordinates are in the normalized 1000x1000 space; `p2` is in crop
/// coordinates. `final` is optional and cross-checked against the value
/// recomputed from (`p2`, `crop_box`) on ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub sample_id: String,
    pub model: String,
    pub r: f64,
    #[serde(default)]
    pub p1: Option<[f64; 2]>,
    #[serde(default)]
    pub crop_box: Option<[f64; 4]>,
    #[serde(default)]
    pub p2: Option<[f64; 2]>,
    #[serde(rename = "final", default, skip_serializing_if = "Option::is_none")]
    pub final_point: Option<[f64; 2]>,
    pub gt_bbox: [f64; 4],
    pub category: String,
    pub os: String,
    pub application: String,
    #[serde(default)]
    pub parse_failed_stage: Option<u8>,
}

/// A non-fatal problem found while reading or pairing a log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    /// 1-based input line, when the problem is tied to one.
    pub line: Option<usize>,
    pub message: String,
}

/// Validated records plus the diagnostics accumulated while reading.
#[derive(Debug, Clone)]
pub struct ParsedLog {
    pub records: Vec<LogRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read log")]
    Io(#[from] std::io::Error),
    #[error("log contains no valid records")]
    EmptyLog,
    #[error("duplicate (sample_id, model) records: {}", .0.join(", "))]
    DuplicateRecords(Vec<String>),
    #[error("no records found for model `{0}`")]
    ModelNotFound(String),
    #[error("invalid gt_bbox on sample `{0}`")]
    InvalidGtBbox(String),
}

/// Read a JSONL log. Malformed or invariant-violating lines are dropped
/// with a diagnostic; suspicious but usable lines are kept with one.
/// A log with zero valid records is an error.
pub fn parse_log<R: BufRead>(reader: R) -> Result<ParsedLog, IngestError> {
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = match serde_json::from_str(&line) {
            Ok(rec) => rec,
            Err(err) => {
                diagnostics.push(Diagnostic {
                    line: Some(lineno),
                    message: format!("malformed JSON: {err}"),
                });
                continue;
            }
        };
        match validate_record(&rec) {
            Ok(warnings) => {
                for w in warnings {
                    diagnostics.push(Diagnostic {
                        line: Some(lineno),
                        message: format!("{}/{}: {w}", rec.sample_id, rec.model),
                    });
                }
                records.push(rec);
            }
            Err(reason) => diagnostics.push(Diagnostic {
                line: Some(lineno),
                message: format!("{}/{}: {reason}; record dropped", rec.sample_id, rec.model),
            }),
        }
    }
    if records.is_empty() {
        return Err(IngestError::EmptyLog);
    }
    Ok(ParsedLog {
        records,
        diagnostics,
    })
}

const COORD_TOLERANCE: f64 = 1e-6;

// Hard failures return Err (record dropped); soft issues come back as
// warnings and the record is kept.
fn validate_record(rec: &LogRecord) -> Result<Vec<String>, String> {
    if !(rec.r.is_finite() && rec.r > 0.0 && rec.r <= 1.0) {
        return Err(format!("crop ratio {} outside (0, 1]", rec.r));
    }
    let [gx0, gy0, gx1, gy1] = rec.gt_bbox;
    let gt_ok = rec.gt_bbox.iter().all(|v| v.is_finite())
        && gx0 <= gx1
        && gy0 <= gy1
        && gx0 >= 0.0
        && gy0 >= 0.0
        && gx1 <= EXTENT
        && gy1 <= EXTENT;
    if !gt_ok {
        return Err(format!("invalid gt_bbox {:?}", rec.gt_bbox));
    }
    let points = [rec.p1, rec.p2, rec.final_point];
    if points.iter().flatten().flatten().any(|v| !v.is_finite())
        || rec.crop_box.iter().flatten().any(|v| !v.is_finite())
    {
        return Err("non-finite coordinates".to_string());
    }
    match rec.parse_failed_stage {
        Some(1) => {
            if rec.p1.is_some() || rec.crop_box.is_some() || rec.p2.is_some()
                || rec.final_point.is_some()
            {
                return Err("parse_failed_stage = 1 but coordinate fields present".to_string());
            }
        }
        Some(2) => {
            if rec.p1.is_none() {
                return Err("parse_failed_stage = 2 requires p1".to_string());
            }
            if rec.p2.is_some() || rec.final_point.is_some() {
                return Err("parse_failed_stage = 2 but step-2 fields present".to_string());
            }
        }
        None => {
            if rec.p1.is_none() || rec.p2.is_none() {
                return Err("missing p1/p2 without parse_failed_stage".to_string());
            }
        }
        Some(s) => return Err(format!("parse_failed_stage must be 1 or 2, got {s}")),
    }
    let mut warnings = Vec::new();
    let crop = match rec.crop_box {
        Some([x0, y0, x1, y1]) => {
            let requested = rec.p1.map(|[x, y]| Point::new(x, y));
            let cb = CropBox::from_corners(x0, y0, x1, y1, requested)
                .map_err(|e| e.to_string())?;
            if (cb.side() - rec.r * EXTENT).abs() > COORD_TOLERANCE {
                warnings.push(format!(
                    "crop side {} does not match r * {EXTENT} = {}",
                    cb.side(),
                    rec.r * EXTENT
                ));
            }
            Some(cb)
        }
        None => rec.p1.map(|[x, y]| {
            make_crop(Point::new(x, y), rec.r).expect("finite p1 and valid ratio")
        }),
    };
    if let (Some(cb), Some([px, py]), Some([fx, fy])) = (crop, rec.p2, rec.final_point) {
        let recomputed = cb.from_crop(Point::new(px, py));
        if (recomputed.x - fx).abs() > COORD_TOLERANCE || (recomputed.y - fy).abs() > COORD_TOLERANCE
        {
            warnings.push(format!(
                "stored final [{fx}, {fy}] differs from recomputed [{}, {}]",
                recomputed.x, recomputed.y
            ));
        }
    }
    for (name, p) in [("p1", rec.p1), ("p2", rec.p2), ("final", rec.final_point)] {
        if let Some([x, y]) = p {
            if !(0.0..=EXTENT).contains(&x) || !(0.0..=EXTENT).contains(&y) {
                warnings.push(format!("{name} [{x}, {y}] outside [0, {EXTENT}]^2"));
            }
        }
    }
    Ok(warnings)
}

/// Rebuild the zoom trace of a validated record. The crop is taken from
/// `crop_box` when present, else reconstructed from (`p1`, `r`); a stored
/// `final` wins over the recomputed one.
pub fn to_trace(rec: &LogRecord) -> ZoomTrace {
    let p1 = rec.p1.map(|[x, y]| Point::new(x, y));
    let crop = match rec.crop_box {
        Some([x0, y0, x1, y1]) => CropBox::from_corners(x0, y0, x1, y1, p1).ok(),
        None => p1.and_then(|c| make_crop(c, rec.r).ok()),
    };
    let p2 = rec.p2.map(|[x, y]| Point::new(x, y));
    let recomputed = match (crop, p2) {
        (Some(cb), Some(p)) => Some(cb.from_crop(p)),
        _ => None,
    };
    let final_point = rec.final_point.map(|[x, y]| Point::new(x, y)).or(recomputed);
    ZoomTrace {
        p1,
        crop,
        p2_crop: p2,
        final_point,
        consistency: p2.map(consistency),
        parse_failed_stage: rec.parse_failed_stage.and_then(ParseStage::from_u8),
    }
}

/// One benchmark sample with all observed model traces and their
/// correctness. Keys in `traces` and `correctness` match; hybrid traces
/// use keys like `"a->b"`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub gt_bbox: BBox,
    pub labels: GroupLabels,
    pub traces: BTreeMap<String, ZoomTrace>,
    pub correctness: BTreeMap<String, bool>,
}

impl SampleRecord {
    pub fn new(sample_id: impl Into<String>, gt_bbox: BBox, labels: GroupLabels) -> Self {
        Self {
            sample_id: sample_id.into(),
            gt_bbox,
            labels,
            traces: BTreeMap::new(),
            correctness: BTreeMap::new(),
        }
    }

    /// Insert a trace and score it against the ground truth.
    pub fn insert_trace(&mut self, model: impl Into<String>, trace: ZoomTrace) {
        let correct = trace
            .final_point
            .map(|f| self.gt_bbox.contains(f))
            .unwrap_or(false);
        let model = model.into();
        self.correctness.insert(model.clone(), correct);
        self.traces.insert(model, trace);
    }

    pub fn trace(&self, model: &str) -> Option<&ZoomTrace> {
        self.traces.get(model)
    }

    /// Missing models and missing predictions both score incorrect.
    pub fn is_correct(&self, model: &str) -> bool {
        self.correctness.get(model).copied().unwrap_or(false)
    }

    pub fn consistency(&self, model: &str) -> Option<f64> {
        self.traces.get(model).and_then(|t| t.consistency)
    }

    pub fn final_point(&self, model: &str) -> Option<Point> {
        self.traces.get(model).and_then(|t| t.final_point)
    }
}

/// Samples paired across two models, in first-appearance order of
/// `sample_id`.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    pub samples: Vec<SampleRecord>,
    pub model_a: String,
    pub model_b: String,
    pub diagnostics: Vec<Diagnostic>,
}

impl PairedDataset {
    /// Samples where both models produced a final prediction.
    pub fn both_parseable(&self) -> Vec<&SampleRecord> {
        self.samples
            .iter()
            .filter(|s| {
                s.trace(&self.model_a).is_some_and(|t| t.parseable())
                    && s.trace(&self.model_b).is_some_and(|t| t.parseable())
            })
            .collect()
    }
}

/// Group validated records by sample and pair two models for routing
/// analysis. Traces of any further models (including hybrid keys) are kept.
///
/// Duplicate (sample_id, model) pairs and models absent from the whole log
/// are errors; a model missing on an individual sample only raises a
/// diagnostic and scores incorrect there.
pub fn pair_models(
    records: &[LogRecord],
    model_a: &str,
    model_b: &str,
) -> Result<PairedDataset, IngestError> {
    let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut dups: Vec<String> = Vec::new();
    for rec in records {
        if !seen.insert((rec.sample_id.as_str(), rec.model.as_str())) {
            dups.push(format!("{}/{}", rec.sample_id, rec.model));
        }
    }
    if !dups.is_empty() {
        dups.sort();
        dups.dedup();
        return Err(IngestError::DuplicateRecords(dups));
    }
    for model in [model_a, model_b] {
        if !records.iter().any(|r| r.model == model) {
            return Err(IngestError::ModelNotFound(model.to_string()));
        }
    }
    let mut order: Vec<&str> = Vec::new();
    let mut by_id: BTreeMap<&str, Vec<&LogRecord>> = BTreeMap::new();
    for rec in records {
        let entry = by_id.entry(rec.sample_id.as_str()).or_default();
        if entry.is_empty() {
            order.push(rec.sample_id.as_str());
        }
        entry.push(rec);
    }
    let mut samples = Vec::with_capacity(order.len());
    let mut diagnostics = Vec::new();
    for id in order {
        let recs = &by_id[id];
        let reference = recs
            .iter()
            .find(|r| r.model == model_a)
            .unwrap_or(&recs[0]);
        let [gx0, gy0, gx1, gy1] = reference.gt_bbox;
        let gt = BBox::new(gx0, gy0, gx1, gy1)
            .map_err(|_| IngestError::InvalidGtBbox(id.to_string()))?;
        for rec in recs.iter() {
            let differs = rec
                .gt_bbox
                .iter()
                .zip(&reference.gt_bbox)
                .any(|(a, b)| (a - b).abs() > COORD_TOLERANCE);
            if differs {
                diagnostics.push(Diagnostic {
                    line: None,
                    message: format!(
                        "sample {id}: gt_bbox of {} differs from {}",
                        rec.model, reference.model
                    ),
                });
            }
        }
        for model in [model_a, model_b] {
            if !recs.iter().any(|r| r.model == model) {
                diagnostics.push(Diagnostic {
                    line: None,
                    message: format!("sample {id}: no record for model {model}"),
                });
            }
        }
        let mut sample = SampleRecord::new(
            id,
            gt,
            GroupLabels {
                category: reference.category.clone(),
                os: reference.os.clone(),
                application: reference.application.clone(),
            },
        );
        for rec in recs.iter() {
            sample.insert_trace(rec.model.clone(), to_trace(rec));
        }
        samples.push(sample);
    }
    Ok(PairedDataset {
        samples,
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        diagnostics,
    })
}

/// Write records as one JSON object per line, in input order.
pub fn write_jsonl<W: Write>(mut writer: W, records: &[LogRecord]) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
