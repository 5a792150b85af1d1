//! Frame-labeled poses: composition, inversion, error measures and the
//! rigid fit between two point clouds.

use nalgebra::Vector3;
use plenreg::se3::{fit_rigid_umeyama, frame, rotation_angle, translation_error, PointCloud, Pose};

fn main() -> plenreg::Result<()> {
    // camera 0 sees the world from 2 m away, camera X sits 300 mm to the side
    let c0_from_w = Pose::from_axis_angle(&Vector3::y(), 0.1, Vector3::new(0.0, 0.0, 2000.0), frame("C0"), frame("W"))?;
    let cx_from_c0 = Pose::from_axis_angle(&Vector3::y(), -0.3, Vector3::new(-300.0, 0.0, 40.0), frame("CX"), frame("C0"))?;
    let cx_from_w = cx_from_c0.compose(&c0_from_w)?;
    println!("composed: {} <- {}", cx_from_w.parent(), cx_from_w.child());

    // frames must chain; the mismatch is reported, not silently ignored
    match c0_from_w.compose(&cx_from_c0) {
        Err(e) => println!("wrong order rejected: {e}"),
        Ok(_) => unreachable!(),
    }

    let back = cx_from_w.compose(&c0_from_w.inverse())?;
    println!(
        "recovered extrinsic: {:.2e} deg, {:.2e} mm off",
        rotation_angle(&back, &cx_from_c0)?,
        translation_error(&back, &cx_from_c0)?
    );

    let pts: Vec<Vector3<f64>> = (0..8)
        .map(|i| Vector3::new((i * 37 % 11) as f64 * 40.0, (i * 13 % 7) as f64 * 55.0, (i * 5 % 3) as f64 * 90.0))
        .collect();
    let moved: Vec<Vector3<f64>> = pts.iter().map(|p| cx_from_c0.transform_point(p)).collect();
    let pairs: Vec<(usize, usize)> = (0..pts.len()).map(|i| (i, i)).collect();
    let fit = fit_rigid_umeyama(&PointCloud::new(pts, frame("C0"))?, &PointCloud::new(moved, frame("CX"))?, &pairs)?;
    println!(
        "rigid fit {} <- {}: {:.2e} deg, {:.2e} mm from truth",
        fit.parent(),
        fit.child(),
        rotation_angle(&fit, &cx_from_c0)?,
        translation_error(&fit, &cx_from_c0)?
    );
    println!("{}", serde_json::to_string_pretty(&fit)?);
    Ok(())
}
