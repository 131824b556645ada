//! Segmentation-driven grasp planning.
//!
//! Every instance in the label map gets `D` candidate rectangles centered on
//! its centroid at angles `k * pi / D`. Each candidate is cropped, split into
//! contact / free / collision sectors, checked against the gripper limits,
//! recentered and scored. The highest-quality valid candidate wins; ties go
//! to the lower instance id, then the lower angle index.

mod quality;
mod subsector;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camgeom::{crop_aligned_rect, CameraError, CameraModel};
use crate::maskio::{InstanceId, InstanceLabelMap};

pub use quality::{
    central_region, check_pose, filter_pose, percent, score_pose, GripperLimitsPx, GripperSpec,
    QualityBreakdown, Rejection,
};
pub use subsector::{
    finetune_pose, identify_subsectors, measure_widths, Finetuned, Sector, SectorCounts,
    SubsectorMap, Widths,
};

pub const DEFAULT_GW_PX: u32 = 96;
pub const DEFAULT_GB_PX: u32 = 24;
pub const DEFAULT_ANGLE_COUNT: u32 = 6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlanError {
    #[error("target instance must be nonzero")]
    BackgroundTarget,
    #[error("empty contact sector")]
    EmptyContact,
    #[error("free region on one side of the contact sector is empty")]
    EmptyFreeRegion,
    #[error("invalid grasp rectangle: {0}")]
    InvalidRect(String),
    #[error("invalid gripper: max opening {max_opening} m, finger width {finger_width} m")]
    InvalidGripper { max_opening: f64, finger_width: f64 },
    #[error(transparent)]
    Camera(#[from] CameraError),
}

/// Grasp rectangle size in pixels and the number of sampled angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraspRectSpec {
    gw: u32,
    gb: u32,
    angles: u32,
}

impl GraspRectSpec {
    pub fn new(gw: u32, gb: u32, angles: u32) -> Result<Self, PlanError> {
        if gw == 0 || gb == 0 || angles == 0 {
            return Err(PlanError::InvalidRect(format!(
                "gw={gw}, gb={gb}, D={angles}; all must be >= 1"
            )));
        }
        Ok(Self { gw, gb, angles })
    }

    /// Width along the closing direction.
    pub fn gw(&self) -> u32 {
        self.gw
    }
    /// Breadth across the closing direction.
    pub fn gb(&self) -> u32 {
        self.gb
    }
    /// Number of equally spaced angles in `[0, pi)`.
    pub fn angles(&self) -> u32 {
        self.angles
    }

    pub fn angle(&self, index: u32) -> f64 {
        index as f64 * PI / self.angles as f64
    }
}

impl Default for GraspRectSpec {
    fn default() -> Self {
        Self {
            gw: DEFAULT_GW_PX,
            gb: DEFAULT_GB_PX,
            angles: DEFAULT_ANGLE_COUNT,
        }
    }
}

/// Gripper and grasp-rectangle configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub max_opening_m: f64,
    pub finger_width_m: f64,
    #[serde(default = "default_gw")]
    pub gw_px: u32,
    #[serde(default = "default_gb")]
    pub gb_px: u32,
    #[serde(rename = "D", default = "default_angles")]
    pub angles: u32,
}

fn default_gw() -> u32 {
    DEFAULT_GW_PX
}
fn default_gb() -> u32 {
    DEFAULT_GB_PX
}
fn default_angles() -> u32 {
    DEFAULT_ANGLE_COUNT
}

impl PlannerConfig {
    pub fn rect(&self) -> Result<GraspRectSpec, PlanError> {
        GraspRectSpec::new(self.gw_px, self.gb_px, self.angles)
    }

    pub fn gripper(&self) -> Result<GripperSpec, PlanError> {
        GripperSpec::new(self.max_opening_m, self.finger_width_m)
    }
}

/// A sampled, not yet evaluated grasp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub instance: InstanceId,
    pub angle_index: u32,
    pub center: [f64; 2],
    pub angle: f64,
}

/// `D` candidates per instance at the instance centroid, ordered by
/// ascending id then ascending angle.
pub fn sample_candidates(map: &InstanceLabelMap, rect: &GraspRectSpec) -> Vec<Candidate> {
    map.instance_stats()
        .into_iter()
        .flat_map(|(id, stats)| {
            (0..rect.angles).map(move |k| Candidate {
                instance: id,
                angle_index: k,
                center: stats.centroid,
                angle: rect.angle(k),
            })
        })
        .collect()
}

/// Grasp expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPose {
    pub xyz_m: [f64; 3],
    pub yaw_rad: f64,
    pub width_m: f64,
}

/// An evaluated grasp `(center, angle, width, quality)`.
///
/// Rejected candidates keep their sampled center, the initial width `gw`
/// and zero quality.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspPose {
    pub instance: InstanceId,
    pub angle_index: u32,
    pub center: [f64; 2],
    pub angle: f64,
    /// Jaw width in pixels.
    pub width: f64,
    pub quality: f64,
    pub breakdown: QualityBreakdown,
    pub rejection: Option<Rejection>,
    pub world: Option<WorldPose>,
    /// Candidate center before finetuning.
    pub sampled_center: [f64; 2],
    pub widths: Option<Widths>,
    pub counts: SectorCounts,
}

impl GraspPose {
    pub fn is_valid(&self) -> bool {
        self.rejection.is_none()
    }

    fn rejected(c: &Candidate, rect: &GraspRectSpec, why: Rejection) -> Self {
        Self {
            instance: c.instance,
            angle_index: c.angle_index,
            center: c.center,
            angle: c.angle,
            width: rect.gw as f64,
            quality: 0.0,
            breakdown: QualityBreakdown::default(),
            rejection: Some(why),
            world: None,
            sampled_center: c.center,
            widths: None,
            counts: SectorCounts::default(),
        }
    }
}

/// All evaluated candidates plus the index of the winner, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub candidates: Vec<GraspPose>,
    pub best_index: Option<usize>,
}

impl PlanOutcome {
    pub fn best(&self) -> Option<&GraspPose> {
        self.best_index.map(|i| &self.candidates[i])
    }
}

/// Everything a single candidate evaluation needs, resolved once per plan.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub rect: GraspRectSpec,
    pub limits: GripperLimitsPx,
    pub cam: &'a CameraModel,
    /// Depth in meters used for metric conversions.
    pub depth: f64,
}

impl<'a> PlanContext<'a> {
    /// `depth` overrides the camera's nominal working distance.
    pub fn new(
        rect: GraspRectSpec,
        gripper: &GripperSpec,
        cam: &'a CameraModel,
        depth: Option<f64>,
    ) -> Result<Self, PlanError> {
        let depth = depth.unwrap_or(cam.nominal_depth());
        let limits = gripper.to_pixels(cam, depth)?;
        Ok(Self {
            rect,
            limits,
            cam,
            depth,
        })
    }
}

/// Runs crop, sector analysis, filtration, finetuning and scoring for one candidate.
pub fn evaluate_candidate(map: &InstanceLabelMap, c: &Candidate, ctx: &PlanContext<'_>) -> GraspPose {
    let rect = &ctx.rect;
    let crop = crop_aligned_rect(map, c.center, c.angle, rect.gw, rect.gb);
    let sub = identify_subsectors(&crop, c.instance).expect("candidates never target background");
    let counts = sub.counts();
    let reject = |why| GraspPose {
        counts,
        ..GraspPose::rejected(c, rect, why)
    };

    let widths = match measure_widths(&sub) {
        Ok(w) => w,
        Err(_) => return reject(Rejection::EmptyContact),
    };
    if let Err(why) = check_pose(&widths, &ctx.limits) {
        return GraspPose {
            widths: Some(widths),
            ..reject(why)
        };
    }
    let fine = match finetune_pose(&sub, &crop) {
        Ok(f) if f.width > 0.0 => f,
        _ => {
            return GraspPose {
                widths: Some(widths),
                ..reject(Rejection::DegenerateWidth)
            }
        }
    };

    let confidence = map.score(c.instance).unwrap_or(0.0);
    let breakdown = score_pose(&sub, confidence);
    let world = world_pose(ctx, fine.center, c.angle, fine.width);
    GraspPose {
        instance: c.instance,
        angle_index: c.angle_index,
        center: fine.center,
        angle: c.angle,
        width: fine.width,
        quality: breakdown.quality(),
        breakdown,
        rejection: None,
        world,
        sampled_center: c.center,
        widths: Some(widths),
        counts,
    }
}

fn world_pose(ctx: &PlanContext<'_>, center: [f64; 2], angle: f64, width_px: f64) -> Option<WorldPose> {
    let xyz = ctx.cam.pixel_to_world(center[0], center[1], Some(ctx.depth)).ok()?;
    Some(WorldPose {
        xyz_m: [xyz.x, xyz.y, xyz.z],
        yaw_rad: ctx.cam.image_angle_to_world_yaw(angle),
        width_m: ctx.cam.pixels_to_meters(width_px, ctx.depth).ok()?,
    })
}

/// Index of the highest-quality valid pose; the first one wins ties, so
/// candidate order decides them.
pub fn select_best(poses: &[GraspPose]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in poses.iter().enumerate() {
        if !p.is_valid() {
            continue;
        }
        match best {
            Some(b) if poses[b].quality >= p.quality => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Plans a grasp for `map`. `depth` overrides the nominal working distance
/// for metric conversions.
pub fn plan(
    map: &InstanceLabelMap,
    rect: &GraspRectSpec,
    gripper: &GripperSpec,
    cam: &CameraModel,
    depth: Option<f64>,
) -> Result<PlanOutcome, PlanError> {
    let ctx = PlanContext::new(*rect, gripper, cam, depth)?;
    let candidates: Vec<GraspPose> = sample_candidates(map, rect)
        .par_iter()
        .map(|c| evaluate_candidate(map, c, &ctx))
        .collect();
    let best_index = select_best(&candidates);
    Ok(PlanOutcome {
        candidates,
        best_index,
    })
}

/// JSON form of a grasp pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseDocument {
    pub valid: bool,
    pub center_px: [f64; 2],
    pub angle_rad: f64,
    pub width_px: f64,
    pub width_m: f64,
    pub quality: f64,
    pub breakdown: QualityBreakdown,
    pub instance: InstanceId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldDocument>,
    /// Grasp rectangle `[gw, gb]` the pose was evaluated with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rect_px: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldDocument {
    pub xyz_m: [f64; 3],
    pub yaw_rad: f64,
}

impl PoseDocument {
    pub fn from_pose(pose: &GraspPose, rect: &GraspRectSpec, cam: &CameraModel, depth: f64) -> Self {
        Self {
            valid: pose.is_valid(),
            center_px: pose.center,
            angle_rad: pose.angle,
            width_px: pose.width,
            width_m: pose
                .world
                .map(|w| w.width_m)
                .or_else(|| cam.pixels_to_meters(pose.width, depth).ok())
                .unwrap_or(0.0),
            quality: pose.quality,
            breakdown: pose.breakdown,
            instance: pose.instance,
            world: pose.world.map(|w| WorldDocument {
                xyz_m: w.xyz_m,
                yaw_rad: w.yaw_rad,
            }),
            rect_px: Some([rect.gw, rect.gb]),
            rejection: pose.rejection,
        }
    }
}
