//! Extrinsic registration by aligning the two cameras' reconstructed
//! feature clouds with RANSAC, then chaining through the calibrations.

use plenreg::ransac3d::{chain_extrinsic_ransac, describe_chain, register_ransac3d, Ransac3dParams};
use plenreg::se3::{rotation_angle, translation_error};
use plenreg::synth::{generate_scene, SceneSpec};

fn main() -> plenreg::Result<()> {
    let seed = 7;
    let spec = SceneSpec::seeded(seed).with_noise(0.5, 1.0).with_outliers(0.3);
    let scene = generate_scene(&spec)?;
    let params = Ransac3dParams { seed, ..Default::default() };

    let reg = register_ransac3d(&scene.cloud0, &scene.cloud_x, &params)?;
    println!(
        "cloud alignment {} <- {}: {} inliers of {} matches, rms {:.3} mm, {} iterations",
        reg.pose.parent(),
        reg.pose.child(),
        reg.inlier_indices.len(),
        reg.correspondences.len(),
        reg.rms_residual,
        reg.iterations_used
    );

    let calib_x = scene.calib_x();
    let extrinsic = chain_extrinsic_ransac(&calib_x, &reg.pose, scene.calib0())?;
    println!("chain: {} * [W0 <- C0]", describe_chain(&[&calib_x, &reg.pose]));
    let truth = scene.extrinsic();
    println!(
        "extrinsic {} <- {}: {:.4} deg, {:.3} mm from truth",
        extrinsic.parent(),
        extrinsic.child(),
        rotation_angle(&extrinsic, &truth)?,
        translation_error(&extrinsic, &truth)?
    );

    let parallel = register_ransac3d(&scene.cloud0, &scene.cloud_x, &Ransac3dParams { parallel: true, ..params })?;
    println!("parallel run identical: {}", parallel == reg);
    Ok(())
}
