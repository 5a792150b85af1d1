//! Virtual-depth points projected onto the common image plane, lens
//! distortion, and the pinhole model of the corrected view.

use nalgebra::Vector3;
use plenreg::camera::{
    distort, lift_from_common_plane, project_pinhole, project_to_common_plane, undistort, DistortionModel,
    PixelPoint, PlenopticIntrinsics, VirtualPoint,
};
use plenreg::se3::{frame, Pose};

fn main() -> plenreg::Result<()> {
    let k = PlenopticIntrinsics::raytrix_r32();
    println!("R32: f = {:.1} px, c = ({}, {}), B = {} mm, b_L0 = {} mm", k.f_px, k.c_x, k.c_y, k.mla_sensor_distance, k.lens_mla_distance);

    for v in [2.0, 3.0, 4.5, 6.0] {
        let p = project_to_common_plane(&VirtualPoint { x: 5000.0, y: 1000.0, v }, &k)?;
        let back = lift_from_common_plane(&p, v, &k)?;
        println!("v = {v}: (5000, 1000) -> ({:.3}, {:.3}), lifted back to ({:.3}, {:.3})", p.x, p.y, back.x, back.y);
    }

    let d = DistortionModel { k1: -0.03, k2: 0.005, k3: 0.0, p1: 2e-4, p2: -1e-4 };
    let ideal = PixelPoint::new(6000.0, 4500.0);
    let raw = distort(&ideal, &d, &k);
    let fixed = undistort(&raw, &d, &k)?;
    println!("distortion moves a corner point by {:.2} px; undistort error {:.1e} px", raw.distance(&ideal), fixed.distance(&ideal));

    let cam = Pose::identity(frame("C0"), frame("W"));
    let px = project_pinhole(&Vector3::new(100.0, -50.0, 2000.0), &cam, &k)?;
    println!("point 2 m ahead lands at ({:.2}, {:.2})", px.x, px.y);
    match project_pinhole(&Vector3::new(0.0, 0.0, -10.0), &cam, &k) {
        Err(e) => println!("{e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
