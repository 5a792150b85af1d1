//! Plenoptic PnP: camera X keypoints in virtual-image coordinates against
//! camera 0's cloud, with the fundamental-matrix filter, RANSAC resection
//! and Levenberg–Marquardt refinement.

use plenreg::features::KeypointSpace;
use plenreg::pnp::{register_pnp_pipeline, PnpParams};
use plenreg::se3::{rotation_angle, translation_error};
use plenreg::synth::{generate_scene, SceneSpec};

fn main() -> plenreg::Result<()> {
    let seed = 3;
    let mut spec = SceneSpec::seeded(seed).with_noise(0.5, 1.0).with_outliers(0.3);
    spec.keypoint_space = KeypointSpace::Virtual;
    let scene = generate_scene(&spec)?;

    let mut params = PnpParams::default().with_seed(seed);
    params.ransac.inlier_threshold = 10.0;
    params.fm_threshold = 8.0;
    let camera = &scene.spec.camera;
    let reg = register_pnp_pipeline(
        &scene.image,
        &scene.cloud0,
        &camera.intrinsics,
        &camera.distortion,
        &scene.reference(),
        &params,
    )?;
    println!("{}", serde_json::to_string_pretty(&reg.diagnostics)?);

    let truth = scene.extrinsic();
    println!(
        "extrinsic {} <- {}: {:.4} deg, {:.3} mm from truth",
        reg.result.pose.parent(),
        reg.result.pose.child(),
        rotation_angle(&reg.result.pose, &truth)?,
        translation_error(&reg.result.pose, &truth)?
    );

    // too few correspondences surface as a tagged stage error
    let mut tiny = SceneSpec::seeded(seed);
    tiny.n_points = 5;
    let tiny = generate_scene(&tiny)?;
    let err = register_pnp_pipeline(&tiny.image, &tiny.cloud0, &camera.intrinsics, &camera.distortion, &tiny.reference(), &params)
        .unwrap_err();
    println!("5 points: {err}");
    Ok(())
}
