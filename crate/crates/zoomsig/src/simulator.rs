//! Synthetic 2-step pipeline: draws targets, injects configurable step-1
//! and step-2 error, replays the crop geometry exactly, and emits datasets
//! in the pipeline-log schema.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{make_crop, BBox, CropBox, Point, ZoomTrace, EXTENT};
use crate::ingest::{GroupLabels, LogRecord, SampleRecord};
use crate::rng::{substream, Stream};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("simulation needs at least one model")]
    NoModels,
    #[error("duplicate model name `{0}`")]
    DuplicateModelName(String),
    #[error("model `{name}`: {reason}")]
    InvalidModel { name: String, reason: String },
    #[error("dataset size must be positive")]
    EmptyDataset,
    #[error("invalid simulation parameter: {0}")]
    InvalidParameter(String),
}

/// 2D error distribution applied to a predicted point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorDist {
    /// Deterministic offset, mostly useful in tests.
    Fixed { dx: f64, dy: f64 },
    /// Independent N(0, sigma^2) per axis.
    IsotropicGaussian { sigma: f64 },
    /// Uniform over the disc of the given radius.
    UniformDisc { radius: f64 },
    /// Weighted mixture of other distributions.
    Mixture { components: Vec<MixtureComponent> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub dist: ErrorDist,
}

impl ErrorDist {
    pub fn sample(&self, rng: &mut Stream) -> [f64; 2] {
        match self {
            ErrorDist::Fixed { dx, dy } => [*dx, *dy],
            ErrorDist::IsotropicGaussian { sigma } => {
                let normal = rand_distr::Normal::new(0.0, *sigma).expect("validated sigma");
                [rng.sample(normal), rng.sample(normal)]
            }
            ErrorDist::UniformDisc { radius } => loop {
                let x: f64 = rng.random_range(-1.0..=1.0);
                let y: f64 = rng.random_range(-1.0..=1.0);
                if x * x + y * y <= 1.0 {
                    return [x * radius, y * radius];
                }
            },
            ErrorDist::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                let mut pick = rng.random_range(0.0..total);
                for c in components {
                    if pick < c.weight {
                        return c.dist.sample(rng);
                    }
                    pick -= c.weight;
                }
                components.last().expect("validated mixture").dist.sample(rng)
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            ErrorDist::Fixed { dx, dy } => {
                if !(dx.is_finite() && dy.is_finite()) {
                    return Err("fixed offset must be finite".into());
                }
            }
            ErrorDist::IsotropicGaussian { sigma } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(format!("sigma must be finite and >= 0, got {sigma}"));
                }
            }
            ErrorDist::UniformDisc { radius } => {
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(format!("radius must be finite and >= 0, got {radius}"));
                }
            }
            ErrorDist::Mixture { components } => {
                if components.is_empty() {
                    return Err("mixture needs at least one component".into());
                }
                let mut total = 0.0;
                for c in components {
                    if !(c.weight.is_finite() && c.weight >= 0.0) {
                        return Err(format!("mixture weight must be >= 0, got {}", c.weight));
                    }
                    total += c.weight;
                    c.dist.validate()?;
                }
                if total <= 0.0 {
                    return Err("mixture weights must sum to a positive value".into());
                }
            }
        }
        Ok(())
    }
}

/// What step 2 does when the target fell outside the crop.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfCropBehavior {
    /// Aim at the in-crop point nearest the target, plus step-2 noise.
    #[default]
    ClampTowardTarget,
    /// Pick uniformly inside the crop view.
    UniformInCrop,
}

/// Error profile of one synthetic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModelConfig {
    pub name: String,
    /// Crop ratio used for every sample.
    pub r: f64,
    pub step1_error: ErrorDist,
    pub step2_error: ErrorDist,
    /// Scales step-2 error by `1 + coupling * |eps1|`, modelling harder
    /// crops after worse step-1 predictions.
    #[serde(default)]
    pub step2_coupling: f64,
    #[serde(default)]
    pub out_of_crop: OutOfCropBehavior,
}

impl SyntheticModelConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |reason: String| SimError::InvalidModel {
            name: self.name.clone(),
            reason,
        };
        if self.name.is_empty() {
            return Err(fail("name must not be empty".into()));
        }
        if self.name.contains("->") {
            return Err(fail("name must not contain `->` (reserved for hybrid traces)".into()));
        }
        if !(self.r.is_finite() && self.r > 0.0 && self.r <= 1.0) {
            return Err(fail(format!("crop ratio {} outside (0, 1]", self.r)));
        }
        if !(self.step2_coupling.is_finite() && self.step2_coupling >= 0.0) {
            return Err(fail(format!(
                "step2_coupling must be finite and >= 0, got {}",
                self.step2_coupling
            )));
        }
        self.step1_error.validate().map_err(&fail)?;
        self.step2_error.validate().map_err(&fail)?;
        Ok(())
    }
}

/// Label pools sampled uniformly per synthetic sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPools {
    pub categories: Vec<String>,
    pub oses: Vec<String>,
    pub applications: Vec<String>,
}

impl Default for LabelPools {
    fn default() -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            categories: own(&["office", "dev", "creative", "cad"]),
            oses: own(&["windows", "macos", "linux"]),
            applications: own(&["editor", "browser", "terminal", "spreadsheet", "paint", "ide"]),
        }
    }
}

/// Full dataset recipe: the models plus sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub models: Vec<SyntheticModelConfig>,
    /// Half side of the square ground-truth box around the target.
    #[serde(default = "default_gt_half_size")]
    pub gt_half_size: f64,
    /// Targets are drawn uniformly over `[margin, EXTENT - margin]^2`.
    #[serde(default)]
    pub target_margin: f64,
    /// Also emit a hybrid trace "a->b" reusing model a's crop with model
    /// b's step-2 behavior (first two models).
    #[serde(default = "default_true")]
    pub emit_stage_split: bool,
    #[serde(default)]
    pub labels: LabelPools,
}

fn default_gt_half_size() -> f64 {
    20.0
}

fn default_true() -> bool {
    true
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.models.is_empty() {
            return Err(SimError::NoModels);
        }
        let mut names = std::collections::BTreeSet::new();
        for m in &self.models {
            m.validate()?;
            if !names.insert(m.name.as_str()) {
                return Err(SimError::DuplicateModelName(m.name.clone()));
            }
        }
        if !(self.gt_half_size.is_finite() && self.gt_half_size >= 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "gt_half_size must be finite and >= 0, got {}",
                self.gt_half_size
            )));
        }
        if !(self.target_margin.is_finite()
            && self.target_margin >= 0.0
            && self.target_margin < EXTENT / 2.0)
        {
            return Err(SimError::InvalidParameter(format!(
                "target_margin must lie in [0, {}), got {}",
                EXTENT / 2.0,
                self.target_margin
            )));
        }
        if self.labels.categories.is_empty()
            || self.labels.oses.is_empty()
            || self.labels.applications.is_empty()
        {
            return Err(SimError::InvalidParameter(
                "label pools must not be empty".into(),
            ));
        }
        Ok(())
    }

    /// Demo recipe: a careful specialist and an erratic generalist whose
    /// errors overlap enough that neither dominates.
    pub fn default_two_model() -> Self {
        let gaussian = |sigma: f64| ErrorDist::IsotropicGaussian { sigma };
        let bimodal = |near: f64, far: f64, far_weight: f64| ErrorDist::Mixture {
            components: vec![
                MixtureComponent {
                    weight: 1.0 - far_weight,
                    dist: gaussian(near),
                },
                MixtureComponent {
                    weight: far_weight,
                    dist: gaussian(far),
                },
            ],
        };
        Self {
            models: vec![
                SyntheticModelConfig {
                    name: "specialist".into(),
                    r: 0.5,
                    step1_error: bimodal(25.0, 220.0, 0.2),
                    step2_error: gaussian(12.0),
                    step2_coupling: 0.002,
                    out_of_crop: OutOfCropBehavior::ClampTowardTarget,
                },
                SyntheticModelConfig {
                    name: "generalist".into(),
                    r: 0.5,
                    step1_error: bimodal(35.0, 260.0, 0.35),
                    step2_error: gaussian(18.0),
                    step2_coupling: 0.002,
                    out_of_crop: OutOfCropBehavior::ClampTowardTarget,
                },
            ],
            gt_half_size: default_gt_half_size(),
            target_margin: 0.0,
            emit_stage_split: true,
            labels: LabelPools::default(),
        }
    }
}

/// One simulated model run with its ground-truth error terms.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub trace: ZoomTrace,
    /// Step-1 error actually injected: `p1 - target`.
    pub true_eps1: [f64; 2],
    /// Step-2 error after coupling. Not applied when the out-of-crop
    /// behavior is `UniformInCrop` and the target missed the crop.
    pub true_eps2: [f64; 2],
    /// Target fell outside the crop (failure mode 1).
    pub out_of_crop: bool,
    /// Step-2 prediction hit the crop-view boundary and was clamped.
    pub step2_clamped: bool,
}

/// One fully simulated sample: the log-schema record plus per-model
/// ground truth keyed like `record.traces`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSample {
    pub record: SampleRecord,
    pub target: Point,
    pub ground_truth: BTreeMap<String, TraceSample>,
}

/// Run one model's 2-step pipeline against a known target.
pub fn simulate_trace(
    cfg: &SyntheticModelConfig,
    target: Point,
    rng: &mut Stream,
) -> Result<TraceSample, SimError> {
    cfg.validate()?;
    let eps1 = cfg.step1_error.sample(rng);
    let p1 = target.offset(eps1[0], eps1[1]);
    let crop = make_crop(p1, cfg.r).expect("finite p1 and validated ratio");
    let eps1_norm = (eps1[0] * eps1[0] + eps1[1] * eps1[1]).sqrt();
    let (p2, eps2, out_of_crop, step2_clamped) = run_step2(cfg, crop, target, eps1_norm, rng);
    Ok(TraceSample {
        trace: ZoomTrace::complete(p1, crop, p2),
        true_eps1: eps1,
        true_eps2: eps2,
        out_of_crop,
        step2_clamped,
    })
}

// Step 2 looks at the crop view: aim at the target's crop coordinates (or
// the nearest in-view point when the target is outside), add coupled
// noise, clamp to the view.
fn run_step2(
    cfg: &SyntheticModelConfig,
    crop: CropBox,
    target: Point,
    eps1_norm: f64,
    rng: &mut Stream,
) -> (Point, [f64; 2], bool, bool) {
    let raw = cfg.step2_error.sample(rng);
    let scale = 1.0 + cfg.step2_coupling * eps1_norm;
    let eps2 = [raw[0] * scale, raw[1] * scale];
    let in_crop = crop.contains(target);
    if !in_crop && cfg.out_of_crop == OutOfCropBehavior::UniformInCrop {
        let p2 = Point::new(rng.random_range(0.0..=EXTENT), rng.random_range(0.0..=EXTENT));
        return (p2, eps2, true, false);
    }
    let aim = if in_crop {
        crop.to_crop(target)
    } else {
        crop.to_crop(target).clamp_to_extent()
    };
    let p2_raw = aim.offset(eps2[0], eps2[1]);
    let p2 = p2_raw.clamp_to_extent();
    (p2, eps2, !in_crop, p2 != p2_raw)
}

/// Simulate `n` samples. Sample `i` draws everything from substream
/// (`seed`, `i`): target, labels, each model in config order, then the
/// hybrid stage-split trace, so datasets are reproducible.
pub fn simulate_dataset(
    config: &SimulationConfig,
    n: u64,
    seed: u64,
) -> Result<Vec<SimulatedSample>, SimError> {
    config.validate()?;
    if n == 0 {
        return Err(SimError::EmptyDataset);
    }
    let mut samples = Vec::with_capacity(n as usize);
    for i in 0..n {
        let mut rng = substream(seed, i);
        let lo = self_margin(config);
        let tx = rng.random_range(lo..=EXTENT - lo);
        let ty = rng.random_range(lo..=EXTENT - lo);
        let target = Point::new(tx, ty);
        let labels = GroupLabels {
            category: pick(&config.labels.categories, &mut rng),
            os: pick(&config.labels.oses, &mut rng),
            application: pick(&config.labels.applications, &mut rng),
        };
        let h = config.gt_half_size;
        let gt = BBox::new(
            (target.x - h).max(0.0),
            (target.y - h).max(0.0),
            (target.x + h).min(EXTENT),
            (target.y + h).min(EXTENT),
        )
        .expect("ordered by construction");
        let mut record = SampleRecord::new(format!("s{i:05}"), gt, labels);
        let mut ground_truth = BTreeMap::new();
        for model in &config.models {
            let ts = simulate_trace(model, target, &mut rng)?;
            record.insert_trace(model.name.clone(), ts.trace.clone());
            ground_truth.insert(model.name.clone(), ts);
        }
        if config.emit_stage_split && config.models.len() >= 2 {
            let (a, b) = (&config.models[0], &config.models[1]);
            let base = &ground_truth[&a.name];
            let p1 = base.trace.p1.expect("simulated trace has p1");
            let crop = base.trace.crop.expect("simulated trace has crop");
            let eps1 = base.true_eps1;
            let eps1_norm = (eps1[0] * eps1[0] + eps1[1] * eps1[1]).sqrt();
            let (p2, eps2, out_of_crop, clamped) = run_step2(b, crop, target, eps1_norm, &mut rng);
            let ts = TraceSample {
                trace: ZoomTrace::complete(p1, crop, p2),
                true_eps1: eps1,
                true_eps2: eps2,
                out_of_crop,
                step2_clamped: clamped,
            };
            let key = format!("{}->{}", a.name, b.name);
            record.insert_trace(key.clone(), ts.trace.clone());
            ground_truth.insert(key, ts);
        }
        samples.push(SimulatedSample {
            record,
            target,
            ground_truth,
        });
    }
    Ok(samples)
}

fn self_margin(config: &SimulationConfig) -> f64 {
    config.target_margin
}

fn pick(pool: &[String], rng: &mut Stream) -> String {
    pool[rng.random_range(0..pool.len())].clone()
}

/// Flatten simulated samples into log-schema records, one line per
/// (sample, trace). Hybrid traces carry the crop owner's ratio.
pub fn to_log_records(samples: &[SimulatedSample], config: &SimulationConfig) -> Vec<LogRecord> {
    let mut ratios: BTreeMap<&str, f64> =
        config.models.iter().map(|m| (m.name.as_str(), m.r)).collect();
    let hybrid_key = if config.models.len() >= 2 {
        let key = format!("{}->{}", config.models[0].name, config.models[1].name);
        Some((key, config.models[0].r))
    } else {
        None
    };
    if let Some((key, r)) = &hybrid_key {
        ratios.insert(key.as_str(), *r);
    }
    let mut records = Vec::new();
    for sample in samples {
        for (model, trace) in &sample.record.traces {
            let r = ratios.get(model.as_str()).copied().unwrap_or_else(|| {
                trace.crop.map(|c| c.ratio()).unwrap_or(1.0)
            });
            records.push(LogRecord {
                sample_id: sample.record.sample_id.clone(),
                model: model.clone(),
                r,
                p1: trace.p1.map(|p| [p.x, p.y]),
                crop_box: trace.crop.map(|c| [c.x0, c.y0, c.x1, c.y1]),
                p2: trace.p2_crop.map(|p| [p.x, p.y]),
                final_point: trace.final_point.map(|p| [p.x, p.y]),
                gt_bbox: sample.record.gt_bbox.as_array(),
                category: sample.record.labels.category.clone(),
                os: sample.record.labels.os.clone(),
                application: sample.record.labels.application.clone(),
                parse_failed_stage: trace.parse_failed_stage.map(|s| s.as_u8()),
            });
        }
    }
    records
}
