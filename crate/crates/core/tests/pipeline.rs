use nalgebra::Vector3;
use plenreg::features::KeypointSpace;
use plenreg::groundtruth::{parse_vicon_csv, plate_frame, sync_frames, to_common_frame};
use plenreg::metrics::{absolute_errors, method_difference, relative_errors};
use plenreg::pnp::{register_pnp_pipeline, PnpParams};
use plenreg::ransac3d::{chain_extrinsic_ransac, register_ransac3d, Ransac3dParams};
use plenreg::se3::{rotation_angle, translation_error, Pose};
use plenreg::synth::{generate_scene, generate_trajectory, SceneSpec, TrajectorySpec};
use plenreg::{Error, Stage};

fn pnp(spec: &SceneSpec, params: &PnpParams) -> plenreg::Result<Pose> {
    let scene = generate_scene(spec)?;
    let c = &scene.spec.camera;
    register_pnp_pipeline(&scene.image, &scene.cloud0, &c.intrinsics, &c.distortion, &scene.reference(), params)
        .map(|r| r.result.pose)
}

#[test]
fn pnp_handles_every_keypoint_space() {
    for space in [KeypointSpace::Corrected, KeypointSpace::Distorted, KeypointSpace::Virtual] {
        let mut spec = SceneSpec::seeded(3);
        spec.keypoint_space = space;
        let est = pnp(&spec, &PnpParams::default()).unwrap();
        let truth = spec.extrinsic();
        assert!(rotation_angle(&est, &truth).unwrap() < 1e-6, "{space:?}");
        assert!(translation_error(&est, &truth).unwrap() < 1e-3, "{space:?}");
    }
}

#[test]
fn both_methods_agree_on_noisy_scenes() {
    for seed in 40..45 {
        let spec = SceneSpec::seeded(seed).with_noise(0.5, 1.0).with_outliers(0.2);
        let scene = generate_scene(&spec).unwrap();
        let params = Ransac3dParams { seed, ..Default::default() };
        let reg = register_ransac3d(&scene.cloud0, &scene.cloud_x, &params).unwrap();
        let r3 = chain_extrinsic_ransac(&scene.calib_x(), &reg.pose, scene.calib0()).unwrap();
        let mut pp = PnpParams::default().with_seed(seed);
        pp.ransac.inlier_threshold = 10.0;
        pp.fm_threshold = 8.0;
        let p = pnp(&spec, &pp).unwrap();
        assert!(rotation_angle(&r3, &p).unwrap() < 1.0);
        assert!(translation_error(&r3, &p).unwrap() < 20.0);
        let d = method_difference(&[r3], &[p]).unwrap();
        assert_eq!(d.translation.n, 1);
    }
}

#[test]
fn mislabeled_reference_is_a_chain_error() {
    let scene = generate_scene(&SceneSpec::seeded(5)).unwrap();
    let mut reference = scene.reference();
    reference.pose = reference.pose.relabeled(reference.pose.parent().clone(), plenreg::se3::frame("elsewhere"));
    let c = &scene.spec.camera;
    let err = register_pnp_pipeline(&scene.image, &scene.cloud0, &c.intrinsics, &c.distortion, &reference, &PnpParams::default())
        .unwrap_err();
    assert_eq!(err.stage(), Some(Stage::Chain));
    assert!(matches!(err.root(), Error::FrameMismatch { .. }));
}

#[test]
fn ground_truth_round_trip_through_the_export() {
    let spec = TrajectorySpec::seeded(8, 25);
    let traj = generate_trajectory(&spec).unwrap();
    let data = parse_vicon_csv(&traj.vicon_csv, &spec.schema).unwrap();
    let vicon = sync_frames(data.stream(&spec.object).unwrap(), spec.n_frames, spec.factor, 0).unwrap();
    let plate = plate_frame(&spec.plate).unwrap();
    let gt: Vec<Pose> = vicon
        .iter()
        .map(|p| to_common_frame(p.as_ref().unwrap(), &plate, &spec.plate.aruco_to_vicon_offset).unwrap())
        .collect();
    let abs = absolute_errors(&traj.poses, &gt).unwrap();
    assert!(abs.translation.rmse < 1e-9 && abs.rotation.rmse < 1e-9);
    let rel = relative_errors(&traj.poses, &gt, 2).unwrap();
    assert_eq!(rel.translation.n, 23);
    assert!(rel.translation.rmse < 1e-9);
}

#[test]
fn ground_truth_gaps_are_skipped() {
    let spec = TrajectorySpec::seeded(9, 6);
    let traj = generate_trajectory(&spec).unwrap();
    let mut est: Vec<Option<Pose>> = traj.poses.iter().cloned().map(Some).collect();
    est[2] = None;
    let shifted: Vec<Pose> = traj
        .poses
        .iter()
        .map(|p| Pose::from_translation(Vector3::new(3.0, 4.0, 0.0), p.parent().clone(), p.parent().clone()).compose(p).unwrap())
        .collect();
    let abs = absolute_errors(&est, &shifted).unwrap();
    assert_eq!(abs.skipped, 1);
    assert_eq!(abs.translation.n, 5);
    assert!((abs.translation.rmse - 5.0).abs() < 1e-9);
}
