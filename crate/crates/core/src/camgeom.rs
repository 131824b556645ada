//! Pinhole camera model and rotated-rectangle cropping of label maps.
//!
//! Image coordinates are `(u, v) = (x, y)` with x to the right, y down and
//! pixel centers at integer coordinates. Grasp angles rotate the image x-axis
//! by the standard rotation matrix in these coordinates.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maskio::{InstanceId, InstanceLabelMap};

/// Default camera-to-bin-floor distance in meters.
pub const DEFAULT_NOMINAL_DEPTH_M: f64 = 0.7;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Nearest-neighbor ties round toward +inf; this slack keeps that decision
/// stable against last-bit differences in how a sample point was computed.
const NEAREST_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CameraError {
    #[error("focal lengths must be positive (fx={fx}, fy={fy})")]
    NonPositiveFocal { fx: f64, fy: f64 },
    #[error("nominal depth must be positive, got {0}")]
    NonPositiveNominalDepth(f64),
    #[error("cam_to_world rotation is not a proper rotation (orthonormality error {0:e})")]
    NotARotation(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("point is behind camera (z = {0})")]
    BehindCamera(f64),
    #[error("camera parameter is not finite")]
    NonFinite,
}

/// Pinhole intrinsics with a rigid camera-to-world transform.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    nominal_depth: f64,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        nominal_depth: f64,
    ) -> Result<Self, CameraError> {
        let finite = [fx, fy, cx, cy, nominal_depth].iter().all(|v| v.is_finite())
            && rotation.iter().all(|v| v.is_finite())
            && translation.iter().all(|v| v.is_finite());
        if !finite {
            return Err(CameraError::NonFinite);
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(CameraError::NonPositiveFocal { fx, fy });
        }
        if nominal_depth <= 0.0 {
            return Err(CameraError::NonPositiveNominalDepth(nominal_depth));
        }
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det_err = (rotation.determinant() - 1.0).abs();
        let err = ortho_err.max(det_err);
        if err > ORTHONORMAL_TOL {
            return Err(CameraError::NotARotation(err));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            nominal_depth,
        })
    }

    /// Camera at the origin looking down +z, no rotation.
    pub fn with_identity_extrinsics(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        nominal_depth: f64,
    ) -> Result<Self, CameraError> {
        Self::new(fx, fy, cx, cy, Matrix3::identity(), Vector3::zeros(), nominal_depth)
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }
    pub fn nominal_depth(&self) -> f64 {
        self.nominal_depth
    }

    fn resolve_depth(&self, depth: Option<f64>) -> Result<f64, CameraError> {
        let z = depth.unwrap_or(self.nominal_depth);
        if z > 0.0 && z.is_finite() {
            Ok(z)
        } else {
            Err(CameraError::NonPositiveDepth(z))
        }
    }

    /// Back-projects pixel `(u, v)` at camera-frame depth `depth` (nominal
    /// depth when `None`) into world coordinates.
    pub fn pixel_to_world(&self, u: f64, v: f64, depth: Option<f64>) -> Result<Vector3<f64>, CameraError> {
        let z = self.resolve_depth(depth)?;
        let p_cam = Vector3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z);
        Ok(self.rotation * p_cam + self.translation)
    }

    /// Projects a world point to `(u, v, depth)`.
    pub fn world_to_pixel(&self, p: &Vector3<f64>) -> Result<(f64, f64, f64), CameraError> {
        let p_cam = self.rotation.transpose() * (p - self.translation);
        let z = p_cam.z;
        if z <= 0.0 {
            return Err(CameraError::BehindCamera(z));
        }
        Ok((self.fx * p_cam.x / z + self.cx, self.fy * p_cam.y / z + self.cy, z))
    }

    /// Image-plane length along the horizontal axis of a metric length at `depth`.
    pub fn meters_to_pixels(&self, length: f64, depth: f64) -> Result<f64, CameraError> {
        if depth <= 0.0 || !depth.is_finite() {
            return Err(CameraError::NonPositiveDepth(depth));
        }
        Ok(length * self.fx / depth)
    }

    pub fn pixels_to_meters(&self, pixels: f64, depth: f64) -> Result<f64, CameraError> {
        if depth <= 0.0 || !depth.is_finite() {
            return Err(CameraError::NonPositiveDepth(depth));
        }
        Ok(pixels * depth / self.fx)
    }

    /// World-frame heading of the image direction at `angle`, folded into `[0, pi)`.
    pub fn image_angle_to_world_yaw(&self, angle: f64) -> f64 {
        let d = self.rotation * Vector3::new(angle.cos(), angle.sin(), 0.0);
        let yaw = d.y.atan2(d.x).rem_euclid(std::f64::consts::PI);
        // rem_euclid can return exactly pi for tiny negative inputs
        if yaw >= std::f64::consts::PI {
            0.0
        } else {
            yaw
        }
    }
}

/// Camera configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default = "default_nominal_depth")]
    pub nominal_depth_m: f64,
    #[serde(default)]
    pub cam_to_world: RigidTransformConfig,
}

fn default_nominal_depth() -> f64 {
    DEFAULT_NOMINAL_DEPTH_M
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidTransformConfig {
    /// Row-major 3x3 rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl Default for RigidTransformConfig {
    fn default() -> Self {
        Self {
            rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            translation: [0.0; 3],
        }
    }
}

impl TryFrom<&CameraConfig> for CameraModel {
    type Error = CameraError;

    fn try_from(c: &CameraConfig) -> Result<Self, Self::Error> {
        CameraModel::new(
            c.fx,
            c.fy,
            c.cx,
            c.cy,
            Matrix3::from_row_slice(&c.cam_to_world.rotation),
            Vector3::from(c.cam_to_world.translation),
            c.nominal_depth_m,
        )
    }
}

impl From<&CameraModel> for CameraConfig {
    fn from(m: &CameraModel) -> Self {
        let r = m.rotation;
        Self {
            fx: m.fx,
            fy: m.fy,
            cx: m.cx,
            cy: m.cy,
            nominal_depth_m: m.nominal_depth,
            cam_to_world: RigidTransformConfig {
                rotation: [
                    r[(0, 0)], r[(0, 1)], r[(0, 2)],
                    r[(1, 0)], r[(1, 1)], r[(1, 2)],
                    r[(2, 0)], r[(2, 1)], r[(2, 2)],
                ],
                translation: [m.translation.x, m.translation.y, m.translation.z],
            },
        }
    }
}

/// Placement of a `gw x gb` rectangle in the image: the map from aligned
/// crop cells `(col, row)` to image coordinates.
///
/// Cell `(c, r)` sits at offset `(c - (gw-1)/2, r - (gb-1)/2)` from the
/// center, rotated by `angle`. Columns run along the closing direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectFrame {
    pub center: [f64; 2],
    pub angle: f64,
    pub gw: u32,
    pub gb: u32,
    cos: f64,
    sin: f64,
}

impl RectFrame {
    pub fn new(center: [f64; 2], angle: f64, gw: u32, gb: u32) -> Self {
        Self {
            center,
            angle,
            gw,
            gb,
            cos: angle.cos(),
            sin: angle.sin(),
        }
    }

    /// Image point of (possibly fractional) aligned coordinates `(col, row)`.
    #[inline]
    pub fn to_image(&self, col: f64, row: f64) -> [f64; 2] {
        let dx = col - (self.gw as f64 - 1.0) / 2.0;
        let dy = row - (self.gb as f64 - 1.0) / 2.0;
        [
            self.center[0] + self.cos * dx - self.sin * dy,
            self.center[1] + self.sin * dx + self.cos * dy,
        ]
    }

    /// The four outer corners of the rectangle in image coordinates, in
    /// order top-left, top-right, bottom-right, bottom-left of the aligned frame.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (w, b) = (self.gw as f64, self.gb as f64);
        [
            self.to_image(-0.5, -0.5),
            self.to_image(w - 0.5, -0.5),
            self.to_image(w - 0.5, b - 0.5),
            self.to_image(-0.5, b - 0.5),
        ]
    }
}

/// Integer pixel nearest to a continuous coordinate.
#[inline]
pub fn nearest_pixel(x: f64) -> i64 {
    (x + 0.5 + NEAREST_SLACK).floor() as i64
}

/// A grasp rectangle cut out of a label map and rotated so the closing
/// direction runs along the columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedCrop {
    frame: RectFrame,
    pixels: Vec<InstanceId>,
}

impl AlignedCrop {
    pub fn frame(&self) -> &RectFrame {
        &self.frame
    }
    /// Number of columns (rectangle width).
    pub fn gw(&self) -> u32 {
        self.frame.gw
    }
    /// Number of rows (rectangle breadth).
    pub fn gb(&self) -> u32 {
        self.frame.gb
    }
    pub fn src_center(&self) -> [f64; 2] {
        self.frame.center
    }
    pub fn src_angle(&self) -> f64 {
        self.frame.angle
    }
    /// Row-major cells, `gb` rows of `gw` columns.
    pub fn pixels(&self) -> &[InstanceId] {
        &self.pixels
    }
    pub fn get(&self, row: u32, col: u32) -> InstanceId {
        self.pixels[(row * self.frame.gw + col) as usize]
    }
}

/// Nearest-neighbor crop of the `gw x gb` rectangle centered at `center`
/// and rotated by `angle`. Samples outside the image read as background.
///
/// # Panics
/// If `gw` or `gb` is zero.
pub fn crop_aligned_rect(map: &InstanceLabelMap, center: [f64; 2], angle: f64, gw: u32, gb: u32) -> AlignedCrop {
    assert!(gw >= 1 && gb >= 1, "grasp rectangle must be at least 1x1");
    let frame = RectFrame::new(center, angle, gw, gb);
    let mut pixels = Vec::with_capacity((gw * gb) as usize);
    for r in 0..gb {
        for c in 0..gw {
            let [x, y] = frame.to_image(c as f64, r as f64);
            pixels.push(map.get(nearest_pixel(x), nearest_pixel(y)));
        }
    }
    AlignedCrop { frame, pixels }
}
