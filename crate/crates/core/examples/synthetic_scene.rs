//! Synthetic oracle: a two-camera scene with exact ground truth, written
//! to feature sidecars and read back.

use plenreg::features::{encode_cloud, encode_image, read_sidecar};
use plenreg::synth::{generate_scene, SceneSpec};

fn main() -> plenreg::Result<()> {
    let spec = SceneSpec::seeded(42).with_noise(0.5, 1.0).with_outliers(0.25);
    let scene = generate_scene(&spec)?;
    let inliers = scene.inlier.iter().filter(|&&b| b).count();
    println!("{} scene points, {inliers} inliers, {} keypoints in camera X", spec.n_points, scene.image.len());
    let e = scene.extrinsic();
    println!("truth {} <- {}: t = {:?} mm", e.parent(), e.child(), e.translation().as_slice());

    let dir = std::env::temp_dir().join("plenreg-synthetic-scene");
    std::fs::create_dir_all(&dir).map_err(|e| plenreg::Error::Config(e.to_string()))?;
    let write = |name: &str, bytes: Vec<u8>| {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map(|_| path).map_err(|e| plenreg::Error::Config(e.to_string()))
    };
    let cloud_path = write("cloud0.lfmf", encode_cloud(&scene.cloud0))?;
    let image_path = write("imageX.lfmf", encode_image(&scene.image))?;

    let cloud = read_sidecar(&cloud_path)?.into_cloud(scene.cloud0.frame.clone())?;
    let image = read_sidecar(&image_path)?.into_image()?;
    println!("sidecars in {}: cloud round trip {}, image round trip {}", dir.display(), cloud == scene.cloud0, image == scene.image);
    println!("same seed, same scene: {}", generate_scene(&spec)? == scene);
    Ok(())
}
