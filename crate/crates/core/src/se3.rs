//! Frame-labeled rigid transforms and closed-form rigid alignment.
//!
//! A [`Pose`] labeled `parent ← child` maps coordinates expressed in the
//! child frame into the parent frame: `p_parent = R · p_child + t`.
//! Composition checks the labels at runtime so that transform chains read
//! from configuration files are validated the same way as chains built in
//! code.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Symbolic frame name such as `W0`, `CX` or `VICON`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameId(String);

impl FrameId {
    pub fn new(label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::InvalidParameter("empty frame label".into()));
        }
        Ok(FrameId(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for FrameId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for FrameId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        FrameId::new(s).map_err(serde::de::Error::custom)
    }
}

/// Shorthand for building a frame label known to be non-empty.
///
/// # Panics
/// Panics on an empty label.
pub fn frame(label: &str) -> FrameId {
    FrameId::new(label).expect("frame label must be non-empty")
}

/// Rigid transform in SE(3), translation in millimeters.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    parent: FrameId,
    child: FrameId,
}

impl Pose {
    /// Builds a pose, rejecting rotations that are not proper orthonormal
    /// matrices within 1e-9.
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        parent: FrameId,
        child: FrameId,
    ) -> Result<Self> {
        if !is_rotation(&rotation) {
            return Err(Error::InvalidParameter(
                "rotation is not orthonormal with det = +1".into(),
            ));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite translation".into()));
        }
        Ok(Pose {
            rotation,
            translation,
            parent,
            child,
        })
    }

    /// Builds a pose from a rotation that is only approximately orthonormal
    /// (for example accumulated from many products) by projecting it onto
    /// SO(3) first.
    pub fn from_parts_projected(
        rotation: &Matrix3<f64>,
        translation: Vector3<f64>,
        parent: FrameId,
        child: FrameId,
    ) -> Result<Self> {
        Pose::new(project_to_so3(rotation)?, translation, parent, child)
    }

    pub fn identity(parent: FrameId, child: FrameId) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            parent,
            child,
        }
    }

    pub fn from_translation(translation: Vector3<f64>, parent: FrameId, child: FrameId) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
            parent,
            child,
        }
    }

    /// Rotation `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(
        axis: &Vector3<f64>,
        angle: f64,
        translation: Vector3<f64>,
        parent: FrameId,
        child: FrameId,
    ) -> Result<Self> {
        let norm = axis.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidParameter("zero rotation axis".into()));
        }
        let rotation = Rotation3::from_scaled_axis(axis / norm * angle).into_inner();
        Pose::new(rotation, translation, parent, child)
    }

    pub fn from_quaternion(
        q: &UnitQuaternion<f64>,
        translation: Vector3<f64>,
        parent: FrameId,
        child: FrameId,
    ) -> Result<Self> {
        Pose::new(
            q.to_rotation_matrix().into_inner(),
            translation,
            parent,
            child,
        )
    }

    /// Pose from a 4×4 homogeneous matrix. The last row must be `0 0 0 1`.
    pub fn from_homogeneous(m: &Matrix4<f64>, parent: FrameId, child: FrameId) -> Result<Self> {
        let last = m.row(3);
        if (last[0].abs() + last[1].abs() + last[2].abs() + (last[3] - 1.0).abs()) > 1e-9 {
            return Err(Error::InvalidParameter(
                "homogeneous matrix last row must be [0 0 0 1]".into(),
            ));
        }
        let rotation = m.fixed_view::<3, 3>(0, 0).into_owned();
        let translation = m.fixed_view::<3, 1>(0, 3).into_owned();
        Pose::new(rotation, translation, parent, child)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn parent(&self) -> &FrameId {
        &self.parent
    }

    pub fn child(&self) -> &FrameId {
        &self.child
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Same transform with new frame labels.
    pub fn relabeled(&self, parent: FrameId, child: FrameId) -> Pose {
        Pose {
            rotation: self.rotation,
            translation: self.translation,
            parent,
            child,
        }
    }

    /// `self ∘ other`; requires `self.child == other.parent`.
    pub fn compose(&self, other: &Pose) -> Result<Pose> {
        if self.child != other.parent {
            return Err(Error::frames(&self.child, &other.parent));
        }
        Ok(Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
            parent: self.parent.clone(),
            child: other.child.clone(),
        })
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
            parent: self.child.clone(),
            child: self.parent.clone(),
        }
    }

    /// Maps a point from the child frame into the parent frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Re-projects the rotation onto SO(3), used after long product chains.
    pub fn renormalized(&self) -> Pose {
        let rotation = project_to_so3(&self.rotation).unwrap_or(self.rotation);
        Pose {
            rotation,
            ..self.clone()
        }
    }

    fn check_same_frames(&self, other: &Pose) -> Result<()> {
        if self.parent != other.parent {
            return Err(Error::frames(&self.parent, &other.parent));
        }
        if self.child != other.child {
            return Err(Error::frames(&self.child, &other.child));
        }
        Ok(())
    }
}

fn is_rotation(r: &Matrix3<f64>) -> bool {
    r.iter().all(|v| v.is_finite())
        && (r.transpose() * r - Matrix3::identity()).norm() < ORTHONORMAL_TOL
        && (r.determinant() - 1.0).abs() < ORTHONORMAL_TOL
}

/// Nearest proper rotation (Frobenius sense) to `m`.
pub(crate) fn project_to_so3(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD failed".into())),
    };
    let d = (u * v_t).determinant().signum();
    Ok(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t)
}

/// Geodesic angle between two rotations, in degrees, in [0, 180].
///
/// Equivalent to `acos((trace(R_a R_bᵀ) − 1) / 2)` but evaluated through
/// `atan2` so small angles keep full precision.
pub fn rotation_angle(a: &Pose, b: &Pose) -> Result<f64> {
    a.check_same_frames(b)?;
    Ok(rotation_angle_between(&a.rotation, &b.rotation))
}

pub(crate) fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a * b.transpose();
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let sin = 0.5
        * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    sin.atan2(cos).to_degrees()
}

/// Euclidean distance between the translations of two poses, in mm.
pub fn translation_error(a: &Pose, b: &Pose) -> Result<f64> {
    a.check_same_frames(b)?;
    Ok((a.translation - b.translation).norm())
}

/// Point set with a frame label.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub frame: FrameId,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>, frame: FrameId) -> Result<Self> {
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidParameter("non-finite point".into()));
        }
        Ok(PointCloud { points, frame })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Least-squares rigid transform (unit scale) mapping `src` points onto
/// `dst` points for the given `(src_index, dst_index)` pairs.
///
/// Result is labeled `dst.frame ← src.frame`. Closed-form SVD solution with
/// a reflection guard.
pub fn fit_rigid_umeyama(
    src: &PointCloud,
    dst: &PointCloud,
    pairs: &[(usize, usize)],
) -> Result<Pose> {
    let mut a = Vec::with_capacity(pairs.len());
    let mut b = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let (Some(p), Some(q)) = (src.points.get(i), dst.points.get(j)) else {
            return Err(Error::InvalidParameter(format!(
                "correspondence ({i}, {j}) out of range"
            )));
        };
        a.push(*p);
        b.push(*q);
    }
    let (rotation, translation) = fit_rigid_points(&a, &b)?;
    Pose::new(rotation, translation, dst.frame.clone(), src.frame.clone())
}

/// Relative singular-value threshold below which a point set counts as
/// collinear.
pub(crate) const COLLINEAR_RATIO: f64 = 1e-6;

/// Second-to-first singular value ratio of the centered point scatter.
pub(crate) fn spread_ratio(points: &[Vector3<f64>]) -> f64 {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let mut sv: Vec<f64> = scatter.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    if sv[0] == 0.0 {
        0.0
    } else {
        sv[1] / sv[0]
    }
}

pub(crate) fn fit_rigid_points(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    if src.len() < 3 || src.len() != dst.len() {
        return Err(Error::DegenerateConfiguration(format!(
            "rigid fit needs at least 3 correspondences, got {}",
            src.len().min(dst.len())
        )));
    }
    if spread_ratio(src) < COLLINEAR_RATIO || spread_ratio(dst) < COLLINEAR_RATIO {
        return Err(Error::DegenerateConfiguration(
            "correspondences are collinear".into(),
        ));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for (p, q) in src.iter().zip(dst) {
        cov += (q - mu_d) * (p - mu_s).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD failed".into())),
    };
    let d = (u * v_t).determinant().signum();
    let rotation = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;
    let translation = mu_d - rotation * mu_s;
    Ok((rotation, translation))
}

/// Rotation from intrinsic X-Y-Z Euler angles (radians): `Rx · Ry · Rz`.
pub fn rotation_from_euler_xyz(angles: &Vector3<f64>) -> Matrix3<f64> {
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), angles.x);
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), angles.y);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), angles.z);
    (rx * ry * rz).into_inner()
}

/// Intrinsic X-Y-Z Euler angles (radians) of a rotation, inverse of
/// [`rotation_from_euler_xyz`] away from gimbal lock.
pub fn euler_xyz_from_rotation(r: &Matrix3<f64>) -> Vector3<f64> {
    let b = r[(0, 2)].clamp(-1.0, 1.0).asin();
    if r[(0, 2)].abs() < 1.0 - 1e-12 {
        let a = (-r[(1, 2)]).atan2(r[(2, 2)]);
        let c = (-r[(0, 1)]).atan2(r[(0, 0)]);
        Vector3::new(a, b, c)
    } else {
        // gimbal lock: fold everything into the x angle
        let a = r[(2, 1)].atan2(r[(1, 1)]);
        Vector3::new(a, b, 0.0)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PoseRepr {
    Parts {
        parent: FrameId,
        child: FrameId,
        rotation: [f64; 9],
        translation: [f64; 3],
    },
    Matrix {
        parent: FrameId,
        child: FrameId,
        matrix: [f64; 16],
    },
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let r = &self.rotation;
        PoseRepr::Parts {
            parent: self.parent.clone(),
            child: self.child.clone(),
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pose = match PoseRepr::deserialize(d)? {
            PoseRepr::Parts {
                parent,
                child,
                rotation,
                translation,
            } => Pose::new(
                Matrix3::from_row_slice(&rotation),
                Vector3::from(translation),
                parent,
                child,
            ),
            PoseRepr::Matrix {
                parent,
                child,
                matrix,
            } => Pose::from_homogeneous(&Matrix4::from_row_slice(&matrix), parent, child),
        };
        pose.map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng, parent: &str, child: &str) -> Pose {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let t = Vector3::new(
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
        );
        Pose::from_axis_angle(&axis, angle, t, frame(parent), frame(child)).unwrap()
    }

    /// Naive 4×4 product written out with explicit loops.
    fn mul4(a: &Matrix4<f64>, b: &Matrix4<f64>) -> Matrix4<f64> {
        let mut out = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    #[test]
    fn identity_composition() {
        let a = Pose::identity(frame("A"), frame("B"));
        let b = Pose::identity(frame("B"), frame("C"));
        let c = a.compose(&b).unwrap();
        assert_eq!(c, Pose::identity(frame("A"), frame("C")));
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_pose(&mut rng, "A", "B");
        let id = p.compose(&p.inverse()).unwrap();
        assert_eq!(id.parent(), &frame("A"));
        assert_eq!(id.child(), &frame("A"));
        assert_relative_eq!(id.to_homogeneous(), Matrix4::identity(), epsilon = 1e-12);
    }

    #[test]
    fn compose_matches_homogeneous_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = random_pose(&mut rng, "A", "B");
            let b = random_pose(&mut rng, "B", "C");
            let got = a.compose(&b).unwrap().to_homogeneous();
            let want = mul4(&a.to_homogeneous(), &b.to_homogeneous());
            for (x, y) in got.iter().zip(want.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn compose_rejects_frame_mismatch() {
        let a = Pose::identity(frame("A"), frame("B"));
        let b = Pose::identity(frame("C"), frame("D"));
        assert!(matches!(a.compose(&b), Err(Error::FrameMismatch { .. })));
    }

    #[test]
    fn inverse_of_translation() {
        let p = Pose::from_translation(Vector3::new(0.0, 0.0, 100.0), frame("A"), frame("B"));
        let inv = p.inverse();
        assert_eq!(inv.translation(), &Vector3::new(0.0, 0.0, -100.0));
        assert_eq!(inv.parent(), &frame("B"));
        let id = Pose::identity(frame("A"), frame("B"));
        assert_eq!(id.inverse(), Pose::identity(frame("B"), frame("A")));
    }

    #[test]
    fn angle_and_translation_error() {
        let id = Pose::identity(frame("A"), frame("B"));
        assert_eq!(rotation_angle(&id, &id).unwrap(), 0.0);
        let rz = Pose::from_axis_angle(
            &Vector3::z(),
            std::f64::consts::FRAC_PI_2,
            Vector3::new(3.0, 4.0, 0.0),
            frame("A"),
            frame("B"),
        )
        .unwrap();
        assert_relative_eq!(rotation_angle(&rz, &id).unwrap(), 90.0, epsilon = 1e-12);
        assert_relative_eq!(translation_error(&rz, &id).unwrap(), 5.0, epsilon = 1e-12);
        let other = Pose::identity(frame("A"), frame("C"));
        assert!(rotation_angle(&id, &other).is_err());
        assert!(translation_error(&id, &other).is_err());
    }

    #[test]
    fn axis_angle_construction_recovers_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let id = Pose::identity(frame("A"), frame("B"));
        for _ in 0..10 {
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let p = Pose::from_axis_angle(&axis, 37.5f64.to_radians(), Vector3::zeros(), frame("A"), frame("B")).unwrap();
            assert!((rotation_angle(&p, &id).unwrap() - 37.5).abs() < 1e-9);
        }
    }

    #[test]
    fn angle_agrees_with_acos_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let a = random_pose(&mut rng, "A", "B");
            let b = random_pose(&mut rng, "A", "B");
            let r = a.rotation() * b.rotation().transpose();
            let acos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees();
            assert!((rotation_angle(&a, &b).unwrap() - acos).abs() < 1e-6);
        }
    }

    #[test]
    fn umeyama_identity_and_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<_> = (0..10)
            .map(|_| Vector3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0)))
            .collect();
        let pairs: Vec<_> = (0..10).map(|i| (i, i)).collect();
        let src = PointCloud::new(pts.clone(), frame("S")).unwrap();
        let same = PointCloud::new(pts.clone(), frame("D")).unwrap();
        let fit = fit_rigid_umeyama(&src, &same, &pairs).unwrap();
        assert_relative_eq!(fit.to_homogeneous(), Matrix4::identity(), epsilon = 1e-12);

        let truth = random_pose(&mut rng, "D", "S");
        let moved = PointCloud::new(pts.iter().map(|p| truth.transform_point(p)).collect(), frame("D")).unwrap();
        let fit = fit_rigid_umeyama(&src, &moved, &pairs).unwrap();
        assert!(rotation_angle(&fit, &truth).unwrap() < 1e-7);
        assert!(translation_error(&fit, &truth).unwrap() < 1e-7);
    }

    #[test]
    fn umeyama_rejects_collinear_and_short_inputs() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 1.0),
            Vector3::new(2.0, 2.0, 2.0),
        ];
        let c = PointCloud::new(pts, frame("S")).unwrap();
        let d = PointCloud { frame: frame("D"), ..c.clone() };
        let pairs = [(0, 0), (1, 1), (2, 2)];
        assert!(matches!(
            fit_rigid_umeyama(&c, &d, &pairs),
            Err(Error::DegenerateConfiguration(_))
        ));
        assert!(matches!(
            fit_rigid_umeyama(&c, &d, &pairs[..2]),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn json_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_pose(&mut rng, "W0", "C0");
        let text = serde_json::to_string(&p).unwrap();
        let back: Pose = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);

        let m = p.to_homogeneous();
        let rows: Vec<f64> = (0..4).flat_map(|i| (0..4).map(move |j| m[(i, j)])).collect();
        let text = serde_json::json!({"parent": "W0", "child": "C0", "matrix": rows}).to_string();
        let back: Pose = serde_json::from_str(&text).unwrap();
        assert_relative_eq!(back.to_homogeneous(), m, epsilon = 1e-15);

        let bad = r#"{"parent":"A","child":"B","rotation":[2,0,0,0,1,0,0,0,1],"translation":[0,0,0]}"#;
        assert!(serde_json::from_str::<Pose>(bad).is_err());
    }

    #[test]
    fn euler_round_trip() {
        let angles = Vector3::new(0.3, -0.7, 1.2);
        let r = rotation_from_euler_xyz(&angles);
        assert_relative_eq!(euler_xyz_from_rotation(&r), angles, epsilon = 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pose_strategy(parent: &'static str, child: &'static str) -> impl Strategy<Value = Pose> {
            (
                prop::array::uniform3(-1.0f64..1.0),
                0.0f64..std::f64::consts::PI,
                prop::array::uniform3(-1000.0f64..1000.0),
            )
                .prop_filter("non-zero axis", |(a, _, _)| Vector3::from(*a).norm() > 1e-3)
                .prop_map(move |(axis, angle, t)| {
                    Pose::from_axis_angle(&Vector3::from(axis), angle, Vector3::from(t), frame(parent), frame(child)).unwrap()
                })
        }

        proptest! {
            #[test]
            fn composition_is_associative(a in pose_strategy("A", "B"), b in pose_strategy("B", "C"), c in pose_strategy("C", "D")) {
                let left = a.compose(&b).unwrap().compose(&c).unwrap();
                let right = a.compose(&b.compose(&c).unwrap()).unwrap();
                let diff = (left.to_homogeneous() - right.to_homogeneous()).abs().max();
                prop_assert!(diff < 1e-10);
            }

            #[test]
            fn double_inverse_is_identity(p in pose_strategy("A", "B")) {
                let back = p.inverse().inverse();
                prop_assert!((back.to_homogeneous() - p.to_homogeneous()).abs().max() < 1e-10);
                prop_assert_eq!(back.parent(), p.parent());
            }

            #[test]
            fn rotation_angle_is_symmetric(a in pose_strategy("A", "B"), b in pose_strategy("A", "B")) {
                let ab = rotation_angle(&a, &b).unwrap();
                let ba = rotation_angle(&b, &a).unwrap();
                prop_assert!((ab - ba).abs() < 1e-9);
                prop_assert!(rotation_angle(&a, &a).unwrap() < 1e-6);
            }
        }
    }
}
