//! Seeded synthetic scenes and trajectories with exact ground truth.
//!
//! A scene is a set of 3D points seen by camera 0 and camera X. Camera 0
//! contributes a feature cloud in its reconstruction frame `W0`; camera X
//! contributes a feature cloud in its own frame `WX` and a single image.
//! Inlier points carry the same descriptor in every view; outliers get an
//! independent random descriptor per view and a random position.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{distort, project_pinhole, CameraModel, DistortionModel, PixelPoint, PlenopticIntrinsics};
use crate::error::{Error, Result};
use crate::features::{DescriptorSet, FeatureCloud, FeatureImage, KeypointSpace};
use crate::groundtruth::{
    from_common_frame, plate_frame, MarkerPlate, ViconData, ViconSchema, COMMON_FRAME, VICON_FRAME,
};
use crate::pnp::{chain_extrinsic_pnp, virtual_keypoint, ReferenceCamera, CAMERA_X};
use crate::se3::{frame, Pose};

const MAX_PLACEMENT_ATTEMPTS: usize = 200;

/// Full description of a synthetic two-camera scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n_points: usize,
    /// Edge lengths (mm) of the box the points are drawn from, centered at
    /// the origin of `W0`.
    pub extent: [f64; 3],
    /// `C0 ← W0`.
    pub pose0: Pose,
    /// `CX ← W0`.
    pub pose_x: Pose,
    /// `WX ← W0`: reconstruction frame of camera X's cloud.
    pub world_x: Pose,
    /// Per-axis σ of the 3D point noise (mm).
    pub noise_3d: f64,
    /// Per-axis σ of the keypoint noise (px).
    pub noise_px: f64,
    /// Fraction of points that are outliers; below 0.5 for solvable scenes.
    pub outlier_fraction: f64,
    pub descriptor_dim: usize,
    pub camera: CameraModel,
    pub keypoint_space: KeypointSpace,
    pub seed: u64,
}

fn look_at(position: Vector3<f64>, target: Vector3<f64>, roll: f64, parent: &str, child: &str) -> Pose {
    let z = (target - position).normalize();
    let hint = if z.y.abs() > 0.9 { Vector3::x() } else { Vector3::y() };
    let x = hint.cross(&z).normalize();
    let y = z.cross(&x);
    let r_wc = Matrix3::from_columns(&[x, y, z]) * Rotation3::from_axis_angle(&Vector3::z_axis(), roll).into_inner();
    let r = r_wc.transpose();
    Pose::from_parts_projected(&r, -(r * position), frame(parent), frame(child)).expect("look-at basis is a rotation")
}

fn random_unit(rng: &mut ChaCha8Rng) -> Unit<Vector3<f64>> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return Unit::new_normalize(v);
        }
    }
}

fn perpendicular(rng: &mut ChaCha8Rng, d: &Vector3<f64>) -> Unit<Vector3<f64>> {
    loop {
        let v = random_unit(rng).into_inner();
        let p = v - d * d.dot(&v);
        if p.norm() > 1e-3 {
            return Unit::new_normalize(p);
        }
    }
}

/// Default lens distortion of synthetic cameras.
pub fn mild_distortion() -> DistortionModel {
    DistortionModel { k1: -0.03, k2: 0.005, k3: 0.0, p1: 2e-4, p2: -1e-4 }
}

impl SceneSpec {
    /// Seeded placement: both cameras about 2 m from the scene center,
    /// 15–25° apart, with random roll; camera X's cloud frame is an
    /// arbitrary rigid motion of `W0`.
    pub fn seeded(seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce0_e5ee_d000_0001);
        let axis = perpendicular(&mut rng, &Vector3::z());
        let tilt = Rotation3::from_axis_angle(&axis, rng.random_range(0.0..30f64).to_radians());
        let dir0 = tilt * Vector3::new(0.0, 0.0, -1.0);
        let spread = perpendicular(&mut rng, &dir0);
        let dir_x = Rotation3::from_axis_angle(&spread, rng.random_range(15.0..25f64).to_radians()) * dir0;
        let center = Vector3::zeros();
        let pose0 = look_at(
            center + dir0 * rng.random_range(1800.0..2200.0),
            center,
            rng.random_range(-10.0..10f64).to_radians(),
            "C0",
            "W0",
        );
        let pose_x = look_at(
            center + dir_x * rng.random_range(1800.0..2200.0),
            center,
            rng.random_range(-10.0..10f64).to_radians(),
            CAMERA_X,
            "W0",
        );
        let world_x = Pose::from_axis_angle(
            &random_unit(&mut rng),
            rng.random_range(0.0..std::f64::consts::PI),
            Vector3::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)),
            frame("WX"),
            frame("W0"),
        )
        .expect("axis-angle pose");
        SceneSpec {
            n_points: 200,
            extent: [600.0, 500.0, 400.0],
            pose0,
            pose_x,
            world_x,
            noise_3d: 0.0,
            noise_px: 0.0,
            outlier_fraction: 0.0,
            descriptor_dim: 32,
            camera: CameraModel { intrinsics: PlenopticIntrinsics::raytrix_r32(), distortion: mild_distortion() },
            keypoint_space: KeypointSpace::Distorted,
            seed,
        }
    }

    pub fn with_noise(mut self, noise_px: f64, noise_3d: f64) -> Self {
        self.noise_px = noise_px;
        self.noise_3d = noise_3d;
        self
    }

    pub fn with_outliers(mut self, fraction: f64) -> Self {
        self.outlier_fraction = fraction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 || self.descriptor_dim == 0 {
            return Err(Error::InvalidParameter("n_points and descriptor_dim must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidParameter("outlier_fraction must lie in [0, 1)".into()));
        }
        if !(self.noise_3d >= 0.0 && self.noise_px >= 0.0) {
            return Err(Error::InvalidParameter("noise must be >= 0".into()));
        }
        if self.extent.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidParameter("extent must be > 0".into()));
        }
        self.camera.intrinsics.validate()?;
        let expect = |p: &Pose, parent: &str, child: &str| {
            if p.parent().as_str() != parent || p.child().as_str() != child {
                return Err(Error::frames(&format!("{parent} <- {child}"), &format!("{} <- {}", p.parent(), p.child())));
            }
            Ok(())
        };
        expect(&self.pose0, "C0", "W0")?;
        expect(&self.pose_x, CAMERA_X, "W0")?;
        expect(&self.world_x, "WX", "W0")?;
        Ok(())
    }

    /// `CX ← C0`.
    pub fn extrinsic(&self) -> Pose {
        chain_extrinsic_pnp(&self.pose_x, &self.pose0).expect("spec frames are consistent")
    }

    /// `CX ← WX`, the calibration of camera X's cloud.
    pub fn calib_x(&self) -> Pose {
        self.pose_x.compose(&self.world_x.inverse()).expect("spec frames are consistent")
    }
}

/// Generated scene with inlier labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub cloud0: FeatureCloud,
    pub cloud_x: FeatureCloud,
    pub image: FeatureImage,
    /// Per scene point; cloud-0 index equals scene index.
    pub inlier: Vec<bool>,
    /// Scene index of every row of `cloud_x`.
    pub cloud_x_source: Vec<usize>,
    /// Scene index of every keypoint of `image`.
    pub image_source: Vec<usize>,
}

impl Scene {
    pub fn reference(&self) -> ReferenceCamera {
        ReferenceCamera { pose: self.spec.pose0.clone(), intrinsics: self.spec.camera.intrinsics.clone() }
    }

    pub fn calib0(&self) -> &Pose {
        &self.spec.pose0
    }

    pub fn calib_x(&self) -> Pose {
        self.spec.calib_x()
    }

    pub fn extrinsic(&self) -> Pose {
        self.spec.extrinsic()
    }
}

fn random_descriptor(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| rng.random::<f32>()).collect()
}

fn noise(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    let n = Normal::new(0.0, sigma).expect("sigma is finite");
    Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

fn visible(p: &Vector3<f64>, pose: &Pose, k: &PlenopticIntrinsics) -> Option<PixelPoint> {
    project_pinhole(p, pose, k).ok().filter(|px| k.contains(px))
}

/// Deterministic scene generation; a pure function of `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = &spec.camera.intrinsics;
    let d = &spec.camera.distortion;
    let half = Vector3::from(spec.extent) / 2.0;
    let draw_in_box = |rng: &mut ChaCha8Rng| {
        Vector3::new(
            rng.random_range(-half.x..half.x),
            rng.random_range(-half.y..half.y),
            rng.random_range(-half.z..half.z),
        )
    };

    let mut points = Vec::with_capacity(spec.n_points);
    let mut attempts = 0;
    while points.len() < spec.n_points {
        attempts += 1;
        if attempts > MAX_PLACEMENT_ATTEMPTS * spec.n_points {
            return Err(Error::InvalidParameter("scene box is not visible from both cameras".into()));
        }
        let p = draw_in_box(&mut rng);
        if visible(&p, &spec.pose0, k).is_some() && visible(&p, &spec.pose_x, k).is_some() {
            points.push(p);
        }
    }

    let n_out = (spec.outlier_fraction * spec.n_points as f64).round() as usize;
    let mut inlier = vec![true; spec.n_points];
    let mut order: Vec<usize> = (0..spec.n_points).collect();
    order.shuffle(&mut rng);
    for &i in &order[..n_out] {
        inlier[i] = false;
    }

    let dim = spec.descriptor_dim;
    let shared: Vec<Vec<f32>> = (0..spec.n_points).map(|_| random_descriptor(&mut rng, dim)).collect();
    let px_noise = (spec.noise_px > 0.0).then(|| Normal::new(0.0, spec.noise_px).expect("sigma is finite"));

    let mut rows0 = Vec::with_capacity(spec.n_points);
    let mut pts0 = Vec::with_capacity(spec.n_points);
    let mut rows_x = Vec::with_capacity(spec.n_points);
    let mut pts_x = Vec::with_capacity(spec.n_points);
    let mut kps = Vec::with_capacity(spec.n_points);
    let mut depths = Vec::with_capacity(spec.n_points);
    let mut rows_img = Vec::with_capacity(spec.n_points);
    for (i, p) in points.iter().enumerate() {
        pts0.push(p + noise(&mut rng, spec.noise_3d));
        let v = rng.random_range(2.0..5.0);
        let (px_exact, x_point) = if inlier[i] {
            rows0.push(shared[i].clone());
            rows_x.push(shared[i].clone());
            rows_img.push(shared[i].clone());
            (visible(p, &spec.pose_x, k).expect("checked at placement"), spec.world_x.transform_point(p))
        } else {
            rows0.push(random_descriptor(&mut rng, dim));
            rows_x.push(random_descriptor(&mut rng, dim));
            rows_img.push(random_descriptor(&mut rng, dim));
            let fake = PixelPoint::new(rng.random_range(0.0..k.width as f64), rng.random_range(0.0..k.height as f64));
            (fake, spec.world_x.transform_point(&draw_in_box(&mut rng)))
        };
        pts_x.push(x_point + noise(&mut rng, spec.noise_3d));
        let mut kp = match spec.keypoint_space {
            KeypointSpace::Corrected => px_exact,
            KeypointSpace::Distorted => distort(&px_exact, d, k),
            KeypointSpace::Virtual => virtual_keypoint(&px_exact, v, k, d)?,
        };
        if let Some(n) = &px_noise {
            kp.x += n.sample(&mut rng);
            kp.y += n.sample(&mut rng);
        }
        kps.push(kp);
        depths.push(v);
    }

    let mut cloud_x_source: Vec<usize> = (0..spec.n_points).collect();
    cloud_x_source.shuffle(&mut rng);
    let mut image_source: Vec<usize> = (0..spec.n_points).collect();
    image_source.shuffle(&mut rng);

    let cloud0 = FeatureCloud::new(frame("W0"), pts0, DescriptorSet::from_rows(&rows0)?)?;
    let cloud_x = FeatureCloud::new(
        frame("WX"),
        cloud_x_source.iter().map(|&i| pts_x[i]).collect(),
        DescriptorSet::from_rows(&cloud_x_source.iter().map(|&i| rows_x[i].clone()).collect::<Vec<_>>())?,
    )?;
    let image = FeatureImage::new(
        spec.keypoint_space,
        image_source.iter().map(|&i| kps[i]).collect(),
        (spec.keypoint_space == KeypointSpace::Virtual).then(|| image_source.iter().map(|&i| depths[i]).collect()),
        DescriptorSet::from_rows(&image_source.iter().map(|&i| rows_img[i].clone()).collect::<Vec<_>>())?,
    )?;
    Ok(Scene {
        spec: spec.clone(),
        cloud0,
        cloud_x,
        image,
        inlier,
        cloud_x_source,
        image_source,
    })
}

// ---------------------------------------------------------------------------
// Trajectories

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionModel {
    /// Every frame repeats the start pose.
    Static,
    /// Smoothly varying velocity; per-frame steps bounded by the given sizes.
    RandomWalk { step_mm: f64, step_deg: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub n_frames: usize,
    pub motion: MotionModel,
    /// Motion-capture samples per camera frame.
    pub factor: usize,
    pub rate_hz: u32,
    pub object: String,
    pub plate: MarkerPlate,
    pub schema: ViconSchema,
    pub seed: u64,
}

impl TrajectorySpec {
    pub fn seeded(seed: u64, n_frames: usize) -> TrajectorySpec {
        TrajectorySpec {
            n_frames,
            motion: MotionModel::RandomWalk { step_mm: 40.0, step_deg: 2.0 },
            factor: 8,
            rate_hz: 80,
            object: "cam2".into(),
            plate: default_plate(),
            schema: ViconSchema::default(),
            seed,
        }
    }
}

/// Plate 500 × 350 mm, turned 12° about the vertical and lifted 15 mm, with
/// its template P1 position.
pub fn default_plate() -> MarkerPlate {
    let r = Rotation3::from_axis_angle(&Vector3::z_axis(), 12f64.to_radians());
    let origin = Vector3::new(250.0, -120.0, 15.0);
    let at = |x: f64, y: f64| origin + r * Vector3::new(x, y, 0.0);
    MarkerPlate {
        p0: at(0.0, 350.0),
        p1: at(500.0, 350.0),
        p2: at(0.0, 0.0),
        p3: at(500.0, 0.0),
        aruco_to_vicon_offset: Vector3::new(-25.0, -25.0, -6.0),
        expected_p1: Some(Vector3::new(500.0, 350.0, 0.0)),
        tolerance_mm: 5.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `COMMON ← object`, one per camera frame.
    pub poses: Vec<Pose>,
    /// Motion-capture export, `factor` rows per frame.
    pub vicon_csv: Vec<u8>,
    pub spec: TrajectorySpec,
}

fn interpolate(a: &Pose, b: &Pose, s: f64) -> Pose {
    let qa = UnitQuaternion::from_matrix(a.rotation());
    let qb = UnitQuaternion::from_matrix(b.rotation());
    let q = qa.slerp(&qb, s);
    let t = a.translation() * (1.0 - s) + b.translation() * s;
    Pose::from_parts_projected(&q.to_rotation_matrix().into_inner(), t, a.parent().clone(), a.child().clone())
        .expect("slerp yields a rotation")
}

/// Smooth random camera motion in the plate frame and its motion-capture
/// recording.
pub fn generate_trajectory(spec: &TrajectorySpec) -> Result<Trajectory> {
    if spec.n_frames < 2 {
        return Err(Error::InvalidParameter("n_frames must be >= 2".into()));
    }
    if spec.factor == 0 {
        return Err(Error::InvalidParameter("factor must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let start = look_at(
        Vector3::new(rng.random_range(-300.0..300.0), rng.random_range(-900.0..-700.0), rng.random_range(500.0..700.0)),
        Vector3::new(250.0, 200.0, 0.0),
        rng.random_range(-0.2..0.2),
        &spec.object,
        COMMON_FRAME,
    )
    .inverse();
    let mut poses = vec![start];
    let (mut v, mut w) = (Vector3::<f64>::zeros(), Vector3::<f64>::zeros());
    for _ in 1..spec.n_frames {
        let prev = poses.last().expect("non-empty");
        let next = match spec.motion {
            MotionModel::Static => prev.clone(),
            MotionModel::RandomWalk { step_mm, step_deg } => {
                v = (0.7 * v + 0.3 * random_unit(&mut rng).into_inner() * step_mm).cap_magnitude(step_mm);
                w = (0.7 * w + 0.3 * random_unit(&mut rng).into_inner() * step_deg.to_radians())
                    .cap_magnitude(step_deg.to_radians());
                let r = Rotation3::new(w).into_inner() * prev.rotation();
                Pose::from_parts_projected(&r, prev.translation() + v, prev.parent().clone(), prev.child().clone())?
            }
        };
        poses.push(next);
    }

    let plate = plate_frame(&spec.plate)?;
    let offset = spec.plate.aruco_to_vicon_offset;
    let mut rows = Vec::with_capacity((spec.n_frames - 1) * spec.factor + 1);
    for k in 0..spec.n_frames {
        let sub = if k + 1 == spec.n_frames { 1 } else { spec.factor };
        for j in 0..sub {
            let p = if j == 0 { poses[k].clone() } else { interpolate(&poses[k], &poses[k + 1], j as f64 / spec.factor as f64) };
            rows.push(Some(from_common_frame(&p, &plate, &offset)?));
        }
    }
    debug_assert!(rows.iter().flatten().all(|p| p.parent().as_str() == VICON_FRAME));
    let data = ViconData::from_trajectories(&spec.schema, spec.rate_hz, &[(spec.object.as_str(), rows)])?;
    Ok(Trajectory {
        poses,
        vicon_csv: crate::groundtruth::write_vicon_csv(&data)?,
        spec: spec.clone(),
    })
}

/// Applies a constant offset expressed in each camera's own axes.
pub fn inject_camera_offset(poses: &[Pose], offset: &Vector3<f64>) -> Result<Vec<Pose>> {
    poses
        .iter()
        .map(|p| p.compose(&Pose::from_translation(*offset, p.child().clone(), p.child().clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::{parse_vicon_csv, sync_frames, to_common_frame};
    use crate::metrics::absolute_errors;
    use crate::pnp::register_pnp_pipeline;
    use crate::pnp::PnpParams;
    use crate::ransac3d::{chain_extrinsic_ransac, register_ransac3d, Ransac3dParams};
    use crate::se3::{rotation_angle, translation_error};

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec::seeded(3).with_noise(0.5, 1.0).with_outliers(0.3);
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.cloud0, generate_scene(&SceneSpec::seeded(4)).unwrap().cloud0);
    }

    #[test]
    fn labels_match_geometry() {
        let scene = generate_scene(&SceneSpec::seeded(5).with_outliers(0.25)).unwrap();
        assert_eq!(scene.inlier.iter().filter(|&&b| !b).count(), 50);
        let calib_x = scene.calib_x();
        for (row, &src) in scene.cloud_x_source.iter().enumerate() {
            if scene.inlier[src] {
                let via_x = calib_x.transform_point(&scene.cloud_x.points[row]);
                let direct = scene.spec.pose_x.transform_point(&scene.cloud0.points[src]);
                assert!((via_x - direct).norm() < 1e-9);
                assert_eq!(scene.cloud_x.descriptors.row(row), scene.cloud0.descriptors.row(src));
            }
        }
    }

    #[test]
    fn noiseless_scene_recovered_by_both_methods() {
        let scene = generate_scene(&SceneSpec::seeded(11)).unwrap();
        let truth = scene.extrinsic();

        let reg = register_ransac3d(&scene.cloud0, &scene.cloud_x, &Ransac3dParams::default()).unwrap();
        let est = chain_extrinsic_ransac(&scene.calib_x(), &reg.pose, scene.calib0()).unwrap();
        assert!(rotation_angle(&est, &truth).unwrap() < 1e-6);
        assert!(translation_error(&est, &truth).unwrap() < 1e-3);

        let out = register_pnp_pipeline(
            &scene.image,
            &scene.cloud0,
            &scene.spec.camera.intrinsics,
            &scene.spec.camera.distortion,
            &scene.reference(),
            &PnpParams::default(),
        )
        .unwrap();
        assert!(rotation_angle(&out.result.pose, &truth).unwrap() < 1e-6);
        assert!(translation_error(&out.result.pose, &truth).unwrap() < 1e-3);
    }

    #[test]
    fn spec_validation() {
        assert!(generate_scene(&SceneSpec::seeded(1).with_outliers(1.0)).is_err());
        let mut bad = SceneSpec::seeded(1);
        bad.pose0 = bad.pose0.relabeled(frame("C1"), frame("W0"));
        assert!(matches!(generate_scene(&bad), Err(Error::FrameMismatch { .. })));
    }

    #[test]
    fn static_trajectory_round_trip() {
        let spec = TrajectorySpec { motion: MotionModel::Static, ..TrajectorySpec::seeded(1, 2) };
        let traj = generate_trajectory(&spec).unwrap();
        assert_eq!(traj.poses[0], traj.poses[1]);
        check_csv(&traj);
    }

    fn check_csv(traj: &Trajectory) {
        let data = parse_vicon_csv(&traj.vicon_csv, &traj.spec.schema).unwrap();
        assert_eq!(data.len(), (traj.poses.len() - 1) * traj.spec.factor + 1);
        let plate = plate_frame(&traj.spec.plate).unwrap();
        let synced = sync_frames(data.stream(&traj.spec.object).unwrap(), traj.poses.len(), traj.spec.factor, 0).unwrap();
        for (s, p) in synced.iter().zip(&traj.poses) {
            let common = to_common_frame(s.as_ref().unwrap(), &plate, &traj.spec.plate.aruco_to_vicon_offset).unwrap();
            assert!((common.to_homogeneous() - p.to_homogeneous()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn random_trajectory_round_trip() {
        let traj = generate_trajectory(&TrajectorySpec::seeded(7, 25)).unwrap();
        check_csv(&traj);
        let steps: Vec<f64> = traj.poses.windows(2).map(|w| (w[1].translation() - w[0].translation()).norm()).collect();
        assert!(steps.iter().all(|&s| s <= 40.0 + 1e-9));
        assert!(steps.iter().any(|&s| s > 1.0));
    }

    #[test]
    fn injected_offset_is_recovered() {
        let traj = generate_trajectory(&TrajectorySpec::seeded(8, 15)).unwrap();
        let est = inject_camera_offset(&traj.poses, &Vector3::new(0.0, 0.0, 50.0)).unwrap();
        let s = absolute_errors(&est, &traj.poses).unwrap();
        assert!((s.translation.rmse - 50.0).abs() < 1e-9);
        assert!(s.translation.sd < 1e-9);
    }
}
