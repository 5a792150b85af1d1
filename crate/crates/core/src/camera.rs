//! Focused plenoptic camera model: lens distortion, the central projection
//! of virtual-depth points onto the common image plane at distance `2B`
//! from the MLA, and the pinhole model of the corrected view.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::Pose;

/// Main-lens / MLA geometry and the pinhole parameters of the corrected
/// perspective view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlenopticIntrinsics {
    /// MLA-to-sensor distance (mm).
    #[serde(rename = "B")]
    pub mla_sensor_distance: f64,
    /// Main-lens-to-MLA distance (mm).
    #[serde(rename = "b_L0")]
    pub lens_mla_distance: f64,
    pub c_x: f64,
    pub c_y: f64,
    /// Effective focal length of the corrected pinhole view (px).
    pub f_px: f64,
    pub pixel_size_um: f64,
    pub width: u32,
    pub height: u32,
}

impl PlenopticIntrinsics {
    /// Raytrix R32 sensor (3.2 µm pixels, 6560×4948) behind a 25 mm main
    /// lens. `B` and `b_L0` are representative values; real ones come from
    /// the intrinsic calibration.
    pub fn raytrix_r32() -> Self {
        let pixel_size_um = 3.2;
        PlenopticIntrinsics {
            mla_sensor_distance: 0.36,
            lens_mla_distance: 24.6,
            c_x: 3280.0,
            c_y: 2474.0,
            f_px: focal_length_px(25.0, pixel_size_um),
            pixel_size_um,
            width: 6560,
            height: 4948,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, name: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::OutOfRange(name.to_string()))
            }
        };
        check(self.mla_sensor_distance > 0.0, "B")?;
        check(self.lens_mla_distance > 0.0, "b_L0")?;
        check(self.f_px > 0.0, "f_px")?;
        check(self.pixel_size_um > 0.0, "pixel_size_um")?;
        check(self.c_x >= 0.0 && self.c_x < self.width as f64, "c_x")?;
        check(self.c_y >= 0.0 && self.c_y < self.height as f64, "c_y")?;
        Ok(())
    }

    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }
}

/// Fallback pinhole focal length when the calibration file does not carry
/// `f_px`: main-lens focal length over pixel pitch.
pub fn focal_length_px(focal_length_mm: f64, pixel_size_um: f64) -> f64 {
    focal_length_mm / (pixel_size_um * 1e-3)
}

/// Brown–Conrady radial (k1..k3) and tangential (p1, p2) coefficients,
/// applied in coordinates normalized by `f_px` around the principal point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistortionModel {
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub k3: f64,
    #[serde(default)]
    pub p1: f64,
    #[serde(default)]
    pub p2: f64,
}

impl DistortionModel {
    pub fn is_identity(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.k3 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0
    }

    fn apply_normalized(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        (xd, yd)
    }
}

/// Intrinsics file contents: geometry plus distortion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    #[serde(flatten)]
    pub intrinsics: PlenopticIntrinsics,
    #[serde(default)]
    pub distortion: DistortionModel,
}

impl CameraModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let model: CameraModel = serde_json::from_str(text)?;
        model.intrinsics.validate()?;
        Ok(model)
    }
}

/// Point on the virtual image with its virtual depth `v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualPoint {
    pub x: f64,
    pub y: f64,
    pub v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub fn new(x: f64, y: f64) -> Self {
        PixelPoint { x, y }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Central projection of a virtual point through the main-lens center onto
/// the plane at `2B` from the MLA.
pub fn project_to_common_plane(p: &VirtualPoint, k: &PlenopticIntrinsics) -> Result<PixelPoint> {
    if !(p.v > 0.0) {
        return Err(Error::InvalidDepth(p.v));
    }
    let b = k.mla_sensor_distance;
    let denom = p.v * b + k.lens_mla_distance;
    let scale = (2.0 * b + k.lens_mla_distance) / denom;
    // written as a correction so that v = 2 and the principal point are exact
    Ok(PixelPoint {
        x: p.x + (p.x - k.c_x) * (scale - 1.0),
        y: p.y + (p.y - k.c_y) * (scale - 1.0),
    })
}

/// Inverse of [`project_to_common_plane`] for a known virtual depth.
pub fn lift_from_common_plane(
    p: &PixelPoint,
    v: f64,
    k: &PlenopticIntrinsics,
) -> Result<VirtualPoint> {
    if !(v > 0.0) {
        return Err(Error::InvalidDepth(v));
    }
    let b = k.mla_sensor_distance;
    let scale = (v * b + k.lens_mla_distance) / (2.0 * b + k.lens_mla_distance);
    Ok(VirtualPoint {
        x: p.x + (p.x - k.c_x) * (scale - 1.0),
        y: p.y + (p.y - k.c_y) * (scale - 1.0),
        v,
    })
}

pub fn distort(p: &PixelPoint, d: &DistortionModel, k: &PlenopticIntrinsics) -> PixelPoint {
    let x = (p.x - k.c_x) / k.f_px;
    let y = (p.y - k.c_y) / k.f_px;
    let (xd, yd) = d.apply_normalized(x, y);
    PixelPoint {
        x: xd * k.f_px + k.c_x,
        y: yd * k.f_px + k.c_y,
    }
}

pub const UNDISTORT_MAX_ITERS: usize = 20;
const UNDISTORT_STEP_TOL_PX: f64 = 1e-8;

/// Removes lens distortion by fixed-point iteration of the forward model.
pub fn undistort(p: &PixelPoint, d: &DistortionModel, k: &PlenopticIntrinsics) -> Result<PixelPoint> {
    undistort_with(p, d, k, UNDISTORT_MAX_ITERS)
}

pub fn undistort_with(
    p: &PixelPoint,
    d: &DistortionModel,
    k: &PlenopticIntrinsics,
    max_iters: usize,
) -> Result<PixelPoint> {
    if !(p.x.is_finite() && p.y.is_finite()) {
        return Err(Error::InvalidParameter("non-finite pixel".into()));
    }
    if d.is_identity() {
        return Ok(*p);
    }
    let xd = (p.x - k.c_x) / k.f_px;
    let yd = (p.y - k.c_y) / k.f_px;
    let (mut x, mut y) = (xd, yd);
    let tol = UNDISTORT_STEP_TOL_PX / k.f_px;
    for _ in 0..max_iters {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
        let dx = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
        let dy = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
        let nx = (xd - dx) / radial;
        let ny = (yd - dy) / radial;
        let step = (nx - x).hypot(ny - y);
        x = nx;
        y = ny;
        if !step.is_finite() {
            break;
        }
        if step < tol {
            return Ok(PixelPoint {
                x: x * k.f_px + k.c_x,
                y: y * k.f_px + k.c_y,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
    })
}

/// Pinhole projection of a world point through `pose` (camera ← world).
pub fn project_pinhole(
    world_point: &Vector3<f64>,
    pose: &Pose,
    k: &PlenopticIntrinsics,
) -> Result<PixelPoint> {
    project_camera_point(&pose.transform_point(world_point), k)
}

pub(crate) fn project_camera_point(pc: &Vector3<f64>, k: &PlenopticIntrinsics) -> Result<PixelPoint> {
    if !(pc.z > 0.0) {
        return Err(Error::BehindCamera { z: pc.z });
    }
    Ok(PixelPoint {
        x: k.f_px * pc.x / pc.z + k.c_x,
        y: k.f_px * pc.y / pc.z + k.c_y,
    })
}
