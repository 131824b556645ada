//! Gripper feasibility checks and the grasp quality index.

use serde::{Deserialize, Serialize};

use super::subsector::{Sector, SubsectorMap, Widths};
use super::PlanError;
use crate::camgeom::CameraModel;

/// Physical parallel-jaw gripper limits in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperSpec {
    max_opening: f64,
    finger_width: f64,
}

impl GripperSpec {
    pub fn new(max_opening: f64, finger_width: f64) -> Result<Self, PlanError> {
        if !(max_opening > 0.0 && finger_width > 0.0 && finger_width < max_opening)
            || !max_opening.is_finite()
        {
            return Err(PlanError::InvalidGripper {
                max_opening,
                finger_width,
            });
        }
        Ok(Self {
            max_opening,
            finger_width,
        })
    }

    pub fn max_opening(&self) -> f64 {
        self.max_opening
    }

    pub fn finger_width(&self) -> f64 {
        self.finger_width
    }

    /// Limits projected into the image plane at `depth` meters.
    pub fn to_pixels(&self, cam: &CameraModel, depth: f64) -> Result<GripperLimitsPx, PlanError> {
        Ok(GripperLimitsPx {
            max_opening: cam.meters_to_pixels(self.max_opening, depth)?,
            finger_width: cam.meters_to_pixels(self.finger_width, depth)?,
        })
    }
}

/// Gripper limits expressed in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperLimitsPx {
    pub max_opening: f64,
    pub finger_width: f64,
}

/// Why a candidate grasp was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    /// The rectangle contains no pixel of the target.
    EmptyContact,
    /// Object is not narrower than the gripper opening.
    TooWide,
    /// Free space left of the object is not wider than a finger.
    LeftBlocked,
    /// Free space right of the object is not wider than a finger.
    RightBlocked,
    /// Free regions produce a non-positive jaw width.
    DegenerateWidth,
}

impl Rejection {
    pub fn as_str(&self) -> &'static str {
        match self {
            Rejection::EmptyContact => "empty_contact",
            Rejection::TooWide => "too_wide",
            Rejection::LeftBlocked => "left_blocked",
            Rejection::RightBlocked => "right_blocked",
            Rejection::DegenerateWidth => "degenerate_width",
        }
    }
}

/// Feasibility test with strict inequalities: both finger clearances must
/// exceed the finger width and the object must be narrower than the opening.
// written as negations so a NaN limit rejects
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn check_pose(widths: &Widths, limits: &GripperLimitsPx) -> Result<(), Rejection> {
    if !((widths.object as f64) < limits.max_opening) {
        return Err(Rejection::TooWide);
    }
    if !(widths.free_left as f64 > limits.finger_width) {
        return Err(Rejection::LeftBlocked);
    }
    if !(widths.free_right as f64 > limits.finger_width) {
        return Err(Rejection::RightBlocked);
    }
    Ok(())
}

pub fn filter_pose(widths: &Widths, limits: &GripperLimitsPx) -> bool {
    check_pose(widths, limits).is_ok()
}

/// The three quality components, each in `[0, 100]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QualityBreakdown {
    /// Unobstructed-space score: free share of the whole rectangle.
    pub oss: f64,
    /// Contact-tangibility score: contact share of the central region.
    pub cts: f64,
    /// Segmentation confidence scaled to 100.
    pub ss: f64,
}

impl QualityBreakdown {
    /// Grasp quality index, the mean of the components.
    pub fn quality(&self) -> f64 {
        (self.oss + self.cts + self.ss) / 3.0
    }
}

/// Central region `(col0, row0, cols, rows)` of a `gw x gb` rectangle:
/// `ceil(gw/2) x ceil(gb/2)` cells, offset by the floor of the leftover half.
pub fn central_region(gw: u32, gb: u32) -> (u32, u32, u32, u32) {
    let cols = gw.div_ceil(2);
    let rows = gb.div_ceil(2);
    ((gw - cols) / 2, (gb - rows) / 2, cols, rows)
}

/// Percentage `100 * part / whole`.
#[inline]
pub fn percent(part: usize, whole: usize) -> f64 {
    100.0 * part as f64 / whole as f64
}

pub fn score_pose(sub: &SubsectorMap, confidence: f64) -> QualityBreakdown {
    let (gw, gb) = (sub.gw(), sub.gb());
    let free = sub.cells().iter().filter(|&&s| s == Sector::Free).count();
    let (c0, r0, cols, rows) = central_region(gw, gb);
    let mut contact = 0;
    for r in r0..r0 + rows {
        for c in c0..c0 + cols {
            if sub.get(r, c) == Sector::Contact {
                contact += 1;
            }
        }
    }
    QualityBreakdown {
        oss: percent(free, (gw * gb) as usize),
        cts: percent(contact, (cols * rows) as usize),
        ss: 100.0 * confidence.clamp(0.0, 1.0),
    }
}
