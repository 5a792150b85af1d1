//! Relative and absolute pose-error statistics and report rendering.
//!
//! Trajectories are lists of `world ← camera` poses, one per frame; `None`
//! marks a frame without ground truth (occlusion gap) and is skipped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{euler_xyz_from_rotation, rotation_angle_between, Pose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "mm")]
    Millimeter,
    #[serde(rename = "deg")]
    Degree,
}

impl Unit {
    pub fn suffix(self) -> &'static str {
        match self {
            Unit::Millimeter => "mm",
            Unit::Degree => "deg",
        }
    }
}

/// RMSE, mean and unbiased standard deviation of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub rmse: f64,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    pub unit: Unit,
}

impl ErrorStats {
    /// `sd` uses the `n − 1` denominator and is 0 for fewer than two values.
    pub fn from_values(values: &[f64], unit: Unit) -> Self {
        let n = values.len();
        if n == 0 {
            return ErrorStats { rmse: 0.0, mean: 0.0, sd: 0.0, n, unit };
        }
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let rmse = (values.iter().map(|v| v * v).sum::<f64>() / nf).sqrt();
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0)).sqrt()
        };
        ErrorStats { rmse, mean, sd, n, unit }
    }
}

/// Translation and rotation statistics of one comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorStats {
    pub translation: ErrorStats,
    pub rotation: ErrorStats,
    /// Frames or pairs left out because a pose was missing.
    pub skipped: usize,
}

/// Signed per-axis components, x/y/z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerAxisStats {
    pub translation: [ErrorStats; 3],
    pub rotation: [ErrorStats; 3],
    pub skipped: usize,
}

/// A trajectory slot: a pose or a gap.
pub trait FrameSlot {
    fn pose(&self) -> Option<&Pose>;
}

impl FrameSlot for Pose {
    fn pose(&self) -> Option<&Pose> {
        Some(self)
    }
}

impl FrameSlot for Option<Pose> {
    fn pose(&self) -> Option<&Pose> {
        self.as_ref()
    }
}

impl<T: FrameSlot> FrameSlot for &T {
    fn pose(&self) -> Option<&Pose> {
        (*self).pose()
    }
}

fn check_lengths<A, B>(a: &[A], b: &[B]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(())
}

fn check_parent(est: &Pose, gt: &Pose) -> Result<()> {
    if est.parent() != gt.parent() {
        return Err(Error::frames(gt.parent(), est.parent()));
    }
    Ok(())
}

fn pair_errors(a: &Pose, b: &Pose) -> (f64, f64) {
    (
        (a.translation() - b.translation()).norm(),
        rotation_angle_between(a.rotation(), b.rotation()),
    )
}

fn stats(t: &[f64], r: &[f64], skipped: usize) -> PoseErrorStats {
    PoseErrorStats {
        translation: ErrorStats::from_values(t, Unit::Millimeter),
        rotation: ErrorStats::from_values(r, Unit::Degree),
        skipped,
    }
}

/// Frame-to-frame motion error: `Δ_k = est_k⁻¹ · est_{k+stride}` against the
/// same quantity of `gt`. Pairs touching a gap in either list are skipped.
pub fn relative_errors<A: FrameSlot, B: FrameSlot>(est: &[A], gt: &[B], stride: usize) -> Result<PoseErrorStats> {
    check_lengths(est, gt)?;
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }
    if est.len() <= stride {
        return Err(Error::InvalidParameter(format!(
            "relative errors need more than {stride} frames, got {}",
            est.len()
        )));
    }
    let (mut t, mut r, mut skipped) = (Vec::new(), Vec::new(), 0);
    for k in 0..est.len() - stride {
        let (Some(e0), Some(e1), Some(g0), Some(g1)) =
            (est[k].pose(), est[k + stride].pose(), gt[k].pose(), gt[k + stride].pose())
        else {
            skipped += 1;
            continue;
        };
        let de = e0.inverse().compose(e1)?;
        let dg = g0.inverse().compose(g1)?;
        let (et, er) = pair_errors(&de, &dg);
        t.push(et);
        r.push(er);
    }
    Ok(stats(&t, &r, skipped))
}

/// Per-frame translation distance and rotation angle between `est_k` and
/// `gt_k`. Both lists must share the world frame.
pub fn absolute_errors<A: FrameSlot, B: FrameSlot>(est: &[A], gt: &[B]) -> Result<PoseErrorStats> {
    check_lengths(est, gt)?;
    let (mut t, mut r, mut skipped) = (Vec::new(), Vec::new(), 0);
    for (e, g) in est.iter().zip(gt) {
        let (Some(e), Some(g)) = (e.pose(), g.pose()) else {
            skipped += 1;
            continue;
        };
        check_parent(e, g)?;
        let (et, er) = pair_errors(e, g);
        t.push(et);
        r.push(er);
    }
    Ok(stats(&t, &r, skipped))
}

/// Absolute errors split along the axes of the estimated camera: signed
/// translation components `R_estᵀ (t_est − t_gt)` and intrinsic XYZ Euler
/// angles (degrees) of `R_gtᵀ R_est`.
pub fn per_axis_errors<A: FrameSlot, B: FrameSlot>(est: &[A], gt: &[B]) -> Result<PerAxisStats> {
    check_lengths(est, gt)?;
    let mut t: [Vec<f64>; 3] = Default::default();
    let mut r: [Vec<f64>; 3] = Default::default();
    let mut skipped = 0;
    for (e, g) in est.iter().zip(gt) {
        let (Some(e), Some(g)) = (e.pose(), g.pose()) else {
            skipped += 1;
            continue;
        };
        check_parent(e, g)?;
        let dt = e.rotation().transpose() * (e.translation() - g.translation());
        let angles = euler_xyz_from_rotation(&(g.rotation().transpose() * e.rotation())).map(f64::to_degrees);
        for a in 0..3 {
            t[a].push(dt[a]);
            r[a].push(angles[a]);
        }
    }
    Ok(PerAxisStats {
        translation: t.map(|v| ErrorStats::from_values(&v, Unit::Millimeter)),
        rotation: r.map(|v| ErrorStats::from_values(&v, Unit::Degree)),
        skipped,
    })
}

/// Absolute errors between two estimates of the same trajectory.
pub fn method_difference<A: FrameSlot, B: FrameSlot>(a: &[A], b: &[B]) -> Result<PoseErrorStats> {
    absolute_errors(a, b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub relative: Option<PoseErrorStats>,
    pub absolute: Option<PoseErrorStats>,
    pub per_axis: Option<PerAxisStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub sequence: String,
    pub methods: Vec<MethodReport>,
    /// Difference between the first two methods, when requested.
    pub difference: Option<PoseErrorStats>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sequences: Vec<SequenceReport>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// From a file extension; anything but `.csv` is JSON.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

fn method_names(report: &EvalReport) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for s in &report.sequences {
        for m in &s.methods {
            if !names.contains(&m.method) {
                names.push(m.method.clone());
            }
        }
    }
    names
}

/// CSV: one row per sequence and evaluation (`relative`, `absolute`) with
/// RMSE and SD columns per method. JSON: the full report.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => {
            let methods = method_names(report);
            let mut header = vec!["sequence".to_string(), "evaluation".to_string()];
            for m in &methods {
                header.extend([
                    format!("{m}_t_rmse_mm"),
                    format!("{m}_t_sd_mm"),
                    format!("{m}_r_rmse_deg"),
                    format!("{m}_r_sd_deg"),
                ]);
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header).expect("in-memory write");
            for s in &report.sequences {
                for (label, pick) in [
                    ("relative", (|m: &MethodReport| m.relative) as fn(&MethodReport) -> Option<PoseErrorStats>),
                    ("absolute", |m: &MethodReport| m.absolute),
                ] {
                    if s.methods.iter().all(|m| pick(m).is_none()) {
                        continue;
                    }
                    let mut row = vec![s.sequence.clone(), label.to_string()];
                    for name in &methods {
                        match s.methods.iter().find(|m| &m.method == name).and_then(pick) {
                            Some(st) => row.extend([
                                format!("{}", st.translation.rmse),
                                format!("{}", st.translation.sd),
                                format!("{}", st.rotation.rmse),
                                format!("{}", st.rotation.sd),
                            ]),
                            None => row.extend(std::iter::repeat_n(String::new(), 4)),
                        }
                    }
                    w.write_record(&row).expect("in-memory write");
                }
            }
            w.into_inner().expect("in-memory write")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::frame;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trajectory(rng: &mut ChaCha8Rng, n: usize) -> Vec<Pose> {
        (0..n)
            .map(|i| {
                let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0);
                Pose::from_axis_angle(
                    &axis,
                    0.1 * i as f64 + rng.random_range(0.0..0.2),
                    Vector3::new(100.0 * i as f64, rng.random_range(-50.0..50.0), 1500.0),
                    frame("COMMON"),
                    frame("cam"),
                )
                .unwrap()
            })
            .collect()
    }

    fn perturb(rng: &mut ChaCha8Rng, p: &Pose, sigma: f64) -> Pose {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let noise = Pose::from_axis_angle(
            &axis,
            sigma * 1e-3,
            Vector3::new(rng.random_range(-sigma..sigma), rng.random_range(-sigma..sigma), rng.random_range(-sigma..sigma)),
            frame("cam"),
            frame("cam"),
        )
        .unwrap();
        p.compose(&noise).unwrap()
    }

    /// Two-pass statistics written out independently of `from_values`.
    fn oracle(values: &[f64]) -> (f64, f64, f64) {
        let n = values.len() as f64;
        let mut sum = 0.0;
        for v in values {
            sum += v;
        }
        let mean = sum / n;
        let mut sq = 0.0;
        let mut dev = 0.0;
        for v in values {
            sq += v * v;
            dev += (v - mean).powi(2);
        }
        ((sq / n).sqrt(), mean, (dev / (n - 1.0)).sqrt())
    }

    #[test]
    fn stats_identity() {
        let v = [1.0, -2.0, 3.5, 0.25, 7.0];
        let s = ErrorStats::from_values(&v, Unit::Millimeter);
        let n = v.len() as f64;
        assert!((s.rmse.powi(2) - (s.mean.powi(2) + s.sd.powi(2) * (n - 1.0) / n)).abs() < 1e-12);
        let single = ErrorStats::from_values(&[4.0], Unit::Degree);
        assert_eq!((single.rmse, single.mean, single.sd, single.n), (4.0, 4.0, 0.0, 1));
        assert_eq!(ErrorStats::from_values(&[], Unit::Degree).n, 0);
    }

    #[test]
    fn identical_trajectories() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = trajectory(&mut rng, 10);
        for s in [relative_errors(&gt, &gt, 1).unwrap(), absolute_errors(&gt, &gt).unwrap(), method_difference(&gt, &gt).unwrap()] {
            assert_eq!(s.translation.rmse, 0.0);
            assert_eq!(s.rotation.rmse, 0.0);
            assert_eq!(s.translation.sd, 0.0);
        }
        let axes = per_axis_errors(&gt, &gt).unwrap();
        assert!(axes.translation.iter().chain(&axes.rotation).all(|s| s.rmse < 1e-12));
    }

    #[test]
    fn left_offset_leaves_relative_rotation_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = trajectory(&mut rng, 12);
        let offset = Pose::from_axis_angle(&Vector3::new(0.3, 0.2, 1.0), 0.8, Vector3::new(40.0, -10.0, 5.0), frame("COMMON"), frame("COMMON")).unwrap();
        let est: Vec<Pose> = gt.iter().map(|p| offset.compose(p).unwrap()).collect();
        let s = relative_errors(&est, &gt, 1).unwrap();
        assert!(s.rotation.rmse < 1e-9);
    }

    #[test]
    fn noisy_trajectory_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = trajectory(&mut rng, 30);
        let est: Vec<Pose> = gt.iter().map(|p| perturb(&mut rng, p, 5.0)).collect();

        let (mut t, mut r) = (Vec::new(), Vec::new());
        for (e, g) in est.iter().zip(&gt) {
            t.push((e.translation() - g.translation()).norm());
            let m = e.rotation() * g.rotation().transpose();
            r.push(((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees());
        }
        let s = absolute_errors(&est, &gt).unwrap();
        let (rmse, mean, sd) = oracle(&t);
        assert!((s.translation.rmse - rmse).abs() < 1e-12);
        assert!((s.translation.mean - mean).abs() < 1e-12);
        assert!((s.translation.sd - sd).abs() < 1e-12);
        let (rmse, _, _) = oracle(&r);
        assert!((s.rotation.rmse - rmse).abs() < 1e-6);

        let (mut t, mut r) = (Vec::new(), Vec::new());
        for k in 0..29 {
            let de = est[k].to_homogeneous().try_inverse().unwrap() * est[k + 1].to_homogeneous();
            let dg = gt[k].to_homogeneous().try_inverse().unwrap() * gt[k + 1].to_homogeneous();
            t.push((de.fixed_view::<3, 1>(0, 3) - dg.fixed_view::<3, 1>(0, 3)).norm());
            let m = de.fixed_view::<3, 3>(0, 0) * dg.fixed_view::<3, 3>(0, 0).transpose();
            r.push(((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees());
        }
        let s = relative_errors(&est, &gt, 1).unwrap();
        let (rmse, _, sd) = oracle(&t);
        assert!((s.translation.rmse - rmse).abs() < 1e-9);
        assert!((s.translation.sd - sd).abs() < 1e-9);
        assert!((s.rotation.rmse - oracle(&r).0).abs() < 1e-6);
        assert_eq!(s.translation.n, 29);
    }

    #[test]
    fn stride_and_gaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt: Vec<Option<Pose>> = trajectory(&mut rng, 10).into_iter().map(Some).collect();
        let mut est = gt.clone();
        est[3] = None;
        let s = relative_errors(&est, &gt, 2).unwrap();
        assert_eq!(s.translation.n + s.skipped, 8);
        assert_eq!(s.skipped, 2);
        let a = absolute_errors(&est, &gt).unwrap();
        assert_eq!((a.translation.n, a.skipped), (9, 1));
        assert!(matches!(absolute_errors(&est[..3], &gt), Err(Error::LengthMismatch { .. })));
        assert!(relative_errors(&gt[..1], &gt[..1], 1).is_err());
    }

    #[test]
    fn frame_mismatch() {
        let a = [Pose::identity(frame("COMMON"), frame("cam"))];
        let b = [Pose::identity(frame("VICON"), frame("cam"))];
        assert!(matches!(absolute_errors(&a, &b), Err(Error::FrameMismatch { .. })));
    }

    #[test]
    fn constant_camera_offset_lands_on_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt = trajectory(&mut rng, 20);
        let o = Vector3::new(0.0, 0.0, 123.69);
        let est: Vec<Pose> = gt
            .iter()
            .map(|p| p.compose(&Pose::from_translation(o, frame("cam"), frame("cam"))).unwrap())
            .collect();
        let axes = per_axis_errors(&est, &gt).unwrap();
        assert!((axes.translation[2].rmse - 123.69).abs() < 1e-9);
        assert!(axes.translation[0].rmse < 1e-9 && axes.translation[1].rmse < 1e-9);
        let abs = absolute_errors(&est, &gt).unwrap();
        assert!((abs.translation.rmse - 123.69).abs() < 1e-9);
        assert!(abs.translation.sd < 1e-9);
    }

    #[test]
    fn per_axis_components_recombine() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gt = trajectory(&mut rng, 1);
        for _ in 0..50 {
            let est = [perturb(&mut rng, &gt[0], 30.0)];
            let axes = per_axis_errors(&est, &gt).unwrap();
            let norm = Vector3::new(axes.translation[0].mean, axes.translation[1].mean, axes.translation[2].mean).norm();
            assert!((norm - absolute_errors(&est, &gt).unwrap().translation.rmse).abs() < 1e-9);
        }
    }

    #[test]
    fn difference_obeys_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gt = trajectory(&mut rng, 15);
        let a: Vec<Pose> = gt.iter().map(|p| perturb(&mut rng, p, 10.0)).collect();
        let b: Vec<Pose> = gt.iter().map(|p| perturb(&mut rng, p, 10.0)).collect();
        let d = method_difference(&a, &b).unwrap();
        let ea = absolute_errors(&a, &gt).unwrap();
        let eb = absolute_errors(&b, &gt).unwrap();
        assert!(d.translation.rmse <= ea.translation.rmse + eb.translation.rmse + 1e-9);
        assert!(d.rotation.rmse <= ea.rotation.rmse + eb.rotation.rmse + 1e-9);
    }

    #[test]
    fn global_frame_change_is_invisible() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gt = trajectory(&mut rng, 10);
        let est: Vec<Pose> = gt.iter().map(|p| perturb(&mut rng, p, 8.0)).collect();
        let g = Pose::from_axis_angle(&Vector3::new(1.0, -1.0, 0.5), 1.1, Vector3::new(300.0, 20.0, -40.0), frame("OTHER"), frame("COMMON")).unwrap();
        let moved = |t: &[Pose]| -> Vec<Pose> { t.iter().map(|p| g.compose(p).unwrap()).collect() };
        let a = absolute_errors(&est, &gt).unwrap();
        let b = absolute_errors(&moved(&est), &moved(&gt)).unwrap();
        assert!((a.translation.rmse - b.translation.rmse).abs() < 1e-9);
        assert!((a.rotation.rmse - b.rotation.rmse).abs() < 1e-9);
        let a = relative_errors(&est, &gt, 1).unwrap();
        let b = relative_errors(&moved(&est), &moved(&gt), 1).unwrap();
        assert!((a.translation.rmse - b.translation.rmse).abs() < 1e-9);
    }

    fn sample_report() -> EvalReport {
        let st = |v: f64| PoseErrorStats {
            translation: ErrorStats::from_values(&[v, v + 1.0], Unit::Millimeter),
            rotation: ErrorStats::from_values(&[v / 10.0], Unit::Degree),
            skipped: 0,
        };
        EvalReport {
            sequences: vec![SequenceReport {
                sequence: "00_Plants".into(),
                methods: vec![
                    MethodReport { method: "ransac3d".into(), relative: Some(st(50.0)), absolute: Some(st(120.0)), per_axis: None },
                    MethodReport { method: "pnp".into(), relative: Some(st(48.0)), absolute: None, per_axis: None },
                ],
                difference: Some(st(13.0)),
            }],
        }
    }

    #[test]
    fn report_rendering() {
        let empty = String::from_utf8(emit_report(&EvalReport::default(), ReportFormat::Csv)).unwrap();
        assert_eq!(empty, "sequence,evaluation\n");

        let report = sample_report();
        let csv = String::from_utf8(emit_report(&report, ReportFormat::Csv)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "sequence,evaluation,ransac3d_t_rmse_mm,ransac3d_t_sd_mm,ransac3d_r_rmse_deg,ransac3d_r_sd_deg,pnp_t_rmse_mm,pnp_t_sd_mm,pnp_r_rmse_deg,pnp_r_sd_deg");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("00_Plants,absolute,") && lines[2].ends_with(",,,,"));

        let json = emit_report(&report, ReportFormat::Json);
        let back: EvalReport = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, report);
        assert_eq!(emit_report(&back, ReportFormat::Json), json);
    }
}
