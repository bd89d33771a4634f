//! Exact arithmetic of the 2-step zoom pipeline in the normalized
//! 1000x1000 coordinate space: crop construction with boundary clipping,
//! the forward/inverse crop coordinate maps, the zoom-consistency signal,
//! and point-in-box scoring.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Side length of the normalized coordinate space.
pub const EXTENT: f64 = 1000.0;

/// Center of a zoomed view in crop coordinates.
pub const CROP_CENTER: Point = Point { x: 500.0, y: 500.0 };

/// Largest consistency value reachable from a point inside the crop,
/// attained at the crop corners.
pub const MAX_CONSISTENCY: f64 = 500.0 * std::f64::consts::SQRT_2;

/// A location in the normalized coordinate space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn offset(self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Clamp both coordinates into `[0, EXTENT]`.
    pub fn clamp_to_extent(self) -> Point {
        Point::new(self.x.clamp(0.0, EXTENT), self.y.clamp(0.0, EXTENT))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("crop ratio must lie in (0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("crop center must be finite, got ({0}, {1})")]
    NonFiniteCenter(f64, f64),
    #[error("invalid box [{x0}, {x1}] x [{y0}, {y1}]")]
    InvalidBox { x0: f64, y0: f64, x1: f64, y1: f64 },
}

/// Square crop region inside the normalized space.
///
/// The side is always `r * EXTENT` for the ratio the crop was built with;
/// clipping translates the box instead of shrinking it, so `clipped` records
/// whether the effective center differs from the requested one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub clipped: bool,
}

impl CropBox {
    /// Build from corner coordinates, validating bounds and squareness.
    ///
    /// When the requested center is known (e.g. the step-1 prediction from a
    /// log), `clipped` is inferred by comparing it to the effective center;
    /// otherwise the box is assumed unclipped.
    pub fn from_corners(
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        requested_center: Option<Point>,
    ) -> Result<Self, GeometryError> {
        let finite = [x0, y0, x1, y1].iter().all(|v| v.is_finite());
        let ordered = x0 < x1 && y0 < y1;
        let in_bounds = x0 >= 0.0 && y0 >= 0.0 && x1 <= EXTENT && y1 <= EXTENT;
        let square = ((x1 - x0) - (y1 - y0)).abs() <= CORNER_TOLERANCE;
        if !(finite && ordered && in_bounds && square) {
            return Err(GeometryError::InvalidBox { x0, y0, x1, y1 });
        }
        let mut cb = Self {
            x0,
            y0,
            x1,
            y1,
            clipped: false,
        };
        if let Some(c) = requested_center {
            let eff = cb.effective_center();
            cb.clipped = (eff.x - c.x).abs() > CORNER_TOLERANCE
                || (eff.y - c.y).abs() > CORNER_TOLERANCE;
        }
        Ok(cb)
    }

    pub fn effective_center(&self) -> Point {
        Point::new((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn side(&self) -> f64 {
        self.x1 - self.x0
    }

    /// Crop ratio implied by the box geometry.
    pub fn ratio(&self) -> f64 {
        self.side() / EXTENT
    }

    /// Inclusive containment test (edge points count as inside).
    pub fn contains(&self, t: Point) -> bool {
        t.x >= self.x0 && t.x <= self.x1 && t.y >= self.y0 && t.y <= self.y1
    }

    /// Map a point from original coordinates into crop coordinates.
    ///
    /// Affine with constant scale `1/ratio`; points outside the crop map
    /// outside `[0, EXTENT]^2` and are left to the caller.
    pub fn to_crop(&self, q: Point) -> Point {
        let c = self.effective_center();
        let r = self.ratio();
        Point::new(
            (q.x - c.x) / r + CROP_CENTER.x,
            (q.y - c.y) / r + CROP_CENTER.y,
        )
    }

    /// Map a point from crop coordinates back to original coordinates.
    /// Inverse of [`CropBox::to_crop`].
    pub fn from_crop(&self, p: Point) -> Point {
        let c = self.effective_center();
        let r = self.ratio();
        Point::new(
            (p.x - CROP_CENTER.x) * r + c.x,
            (p.y - CROP_CENTER.y) * r + c.y,
        )
    }
}

// Tolerance for squareness checks and clipped-flag inference on boxes read
// back from logs, which may carry rounded coordinates.
const CORNER_TOLERANCE: f64 = 1e-6;

/// Construct the square crop of side `r * EXTENT` around `center`.
///
/// When the centered box would extend past the image boundary it is
/// translated per axis just enough to fit (shift-to-fit), preserving the
/// side length. `clipped` is set iff any translation occurred.
pub fn make_crop(center: Point, r: f64) -> Result<CropBox, GeometryError> {
    if !(r > 0.0 && r <= 1.0) || !r.is_finite() {
        return Err(GeometryError::InvalidRatio(r));
    }
    if !center.is_finite() {
        return Err(GeometryError::NonFiniteCenter(center.x, center.y));
    }
    let side = r * EXTENT;
    let x0 = fit_axis(center.x - side / 2.0, side);
    let y0 = fit_axis(center.y - side / 2.0, side);
    let clipped = x0 != center.x - side / 2.0 || y0 != center.y - side / 2.0;
    Ok(CropBox {
        x0,
        y0,
        x1: x0 + side,
        y1: y0 + side,
        clipped,
    })
}

fn fit_axis(lo: f64, side: f64) -> f64 {
    lo.clamp(0.0, EXTENT - side)
}

/// Zoom consistency: Euclidean distance from the step-2 prediction to the
/// crop center. Lower values indicate the step-1 prediction was already
/// near the target.
pub fn consistency(p2: Point) -> f64 {
    p2.dist(CROP_CENTER)
}

/// Step-1 error magnitude implied by a consistency value under ideal
/// conditions (target in crop, perfect step 2): `r * c`.
pub fn implied_step1_error(c: f64, r: f64) -> f64 {
    r * c
}

/// Axis-aligned ground-truth box in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        let finite = [x0, y0, x1, y1].iter().all(|v| v.is_finite());
        if !finite || x0 > x1 || y0 > y1 {
            return Err(GeometryError::InvalidBox { x0, y0, x1, y1 });
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn center(&self) -> Point {
        Point::new((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Inclusive point-in-bounding-box test, the benchmark accuracy metric.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

/// Pipeline stage at which a model's output could not be parsed into
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseStage {
    Step1,
    Step2,
}

impl ParseStage {
    pub fn as_u8(self) -> u8 {
        match self {
            ParseStage::Step1 => 1,
            ParseStage::Step2 => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(ParseStage::Step1),
            2 => Some(ParseStage::Step2),
            _ => None,
        }
    }
}

/// One model's full 2-step record for one sample.
///
/// `consistency` is present iff `p2_crop` is; `final_point` is present iff
/// both `p2_crop` and `crop` are, and equals the inverse map of `p2_crop`
/// through `crop`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoomTrace {
    pub p1: Option<Point>,
    pub crop: Option<CropBox>,
    pub p2_crop: Option<Point>,
    pub final_point: Option<Point>,
    pub consistency: Option<f64>,
    pub parse_failed_stage: Option<ParseStage>,
}

impl ZoomTrace {
    /// A trace where both steps produced coordinates.
    pub fn complete(p1: Point, crop: CropBox, p2_crop: Point) -> Self {
        Self {
            p1: Some(p1),
            crop: Some(crop),
            p2_crop: Some(p2_crop),
            final_point: Some(crop.from_crop(p2_crop)),
            consistency: Some(consistency(p2_crop)),
            parse_failed_stage: None,
        }
    }

    /// A trace that failed to parse at step 1 (no fields populated).
    pub fn failed_step1() -> Self {
        Self {
            p1: None,
            crop: None,
            p2_crop: None,
            final_point: None,
            consistency: None,
            parse_failed_stage: Some(ParseStage::Step1),
        }
    }

    /// A trace that parsed step 1 but failed at step 2.
    pub fn failed_step2(p1: Point, crop: CropBox) -> Self {
        Self {
            p1: Some(p1),
            crop: Some(crop),
            p2_crop: None,
            final_point: None,
            consistency: None,
            parse_failed_stage: Some(ParseStage::Step2),
        }
    }

    /// Whether the pipeline produced a final prediction.
    pub fn parseable(&self) -> bool {
        self.final_point.is_some()
    }
}
