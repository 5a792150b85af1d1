//! Motion-capture ground truth: parse the CSV export, downsample to camera
//! frames and re-express the poses in the marker-plate frame.

use plenreg::groundtruth::{parse_vicon_csv, plate_frame, sync_frames, to_common_frame, write_vicon_csv};
use plenreg::se3::{rotation_angle, translation_error};
use plenreg::synth::{generate_trajectory, TrajectorySpec};

fn main() -> plenreg::Result<()> {
    let spec = TrajectorySpec::seeded(4, 10);
    let traj = generate_trajectory(&spec)?;
    let text = String::from_utf8_lossy(&traj.vicon_csv);
    println!("export head:");
    for line in text.lines().take(7) {
        println!("  {line}");
    }

    let data = parse_vicon_csv(&traj.vicon_csv, &spec.schema)?;
    println!("objects {:?}, {} rows, byte-stable: {}", data.objects(), data.len(), write_vicon_csv(&data)? == traj.vicon_csv);

    let plate = plate_frame(&spec.plate)?;
    println!("plate origin at {:?} mm", plate.translation().as_slice());
    let frames = sync_frames(data.stream(&spec.object)?, spec.n_frames, spec.factor, 0)?;
    for (k, (pose, truth)) in frames.iter().zip(&traj.poses).enumerate().take(4) {
        let Some(pose) = pose else { continue };
        let common = to_common_frame(pose, &plate, &spec.plate.aruco_to_vicon_offset)?;
        println!(
            "frame {k} (sample {}): {} <- {}, {:.1e} deg / {:.1e} mm from the generated pose",
            k * spec.factor,
            common.parent(),
            common.child(),
            rotation_angle(&common, truth)?,
            translation_error(&common, truth)?
        );
    }
    Ok(())
}
