//! Registration from two feature clouds: descriptor matching, RANSAC over
//! 3-point rigid fits, and the transform chain from the cloud-to-cloud
//! alignment to the camera-to-camera extrinsic.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{match_bruteforce_l2, FeatureCloud};
use crate::ransac::{self, Estimator, RansacConfig};
use crate::se3::{fit_rigid_points, spread_ratio, PointCloud, Pose, COLLINEAR_RATIO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ransac3dParams {
    pub max_iterations: usize,
    /// Point-to-point distance in mm for 3D registration, reprojection
    /// error in px when used for PnP.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub seed: u64,
    pub confidence: f64,
    /// Fraction of the best descriptor matches kept before RANSAC.
    pub keep_ratio: f64,
    /// Score hypotheses on the rayon pool. Results are identical either way,
    /// so the flag is not written to outputs.
    #[serde(skip_serializing)]
    pub parallel: bool,
}

impl Default for Ransac3dParams {
    fn default() -> Self {
        Ransac3dParams {
            max_iterations: 2000,
            inlier_threshold: 10.0,
            min_inliers: 10,
            seed: 0,
            confidence: 0.999,
            keep_ratio: 0.8,
            parallel: false,
        }
    }
}

impl Ransac3dParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidParameter("inlier_threshold must be > 0".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidParameter("confidence must lie in (0, 1)".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be > 0".into()));
        }
        if !(self.keep_ratio > 0.0 && self.keep_ratio <= 1.0) {
            return Err(Error::InvalidParameter("keep_ratio must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub(crate) fn ransac_config(&self) -> RansacConfig {
        RansacConfig {
            max_iterations: self.max_iterations,
            threshold: self.inlier_threshold,
            confidence: self.confidence,
            seed: self.seed,
            parallel: self.parallel,
        }
    }
}

/// Estimated pose with inlier diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub pose: Pose,
    /// Correspondences fed to RANSAC, as (reference index, other index).
    pub correspondences: Vec<(usize, usize)>,
    /// Indices into `correspondences`.
    pub inlier_indices: Vec<usize>,
    /// RMS residual over inliers (mm for 3D, px for PnP).
    pub rms_residual: f64,
    pub iterations_used: usize,
}

impl RegistrationResult {
    pub fn inlier_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.inlier_indices.iter().map(|&k| self.correspondences[k])
    }
}

struct RigidEstimator {
    src: Vec<Vector3<f64>>,
    dst: Vec<Vector3<f64>>,
}

impl RigidEstimator {
    fn gather(&self, idx: &[usize]) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
        (
            idx.iter().map(|&i| self.src[i]).collect(),
            idx.iter().map(|&i| self.dst[i]).collect(),
        )
    }
}

impl Estimator for RigidEstimator {
    type Model = (nalgebra::Matrix3<f64>, Vector3<f64>);

    fn sample_size(&self) -> usize {
        3
    }

    fn len(&self) -> usize {
        self.src.len()
    }

    fn is_degenerate(&self, sample: &[usize]) -> bool {
        let (a, b) = self.gather(sample);
        spread_ratio(&a) < COLLINEAR_RATIO || spread_ratio(&b) < COLLINEAR_RATIO
    }

    fn fit(&self, sample: &[usize]) -> Option<Self::Model> {
        let (a, b) = self.gather(sample);
        fit_rigid_points(&a, &b).ok()
    }

    fn residual(&self, (r, t): &Self::Model, i: usize) -> f64 {
        (r * self.src[i] + t - self.dst[i]).norm()
    }
}

/// RANSAC rigid alignment over explicit correspondences `(src, dst)`.
/// Result is labeled `dst.frame ← src.frame`.
pub fn ransac_rigid(
    src: &PointCloud,
    dst: &PointCloud,
    pairs: &[(usize, usize)],
    params: &Ransac3dParams,
) -> Result<RegistrationResult> {
    params.validate()?;
    if pairs.len() < 3 {
        return Err(Error::InsufficientMatches { found: pairs.len(), required: 3 });
    }
    for &(i, j) in pairs {
        if i >= src.len() || j >= dst.len() {
            return Err(Error::InvalidParameter(format!("correspondence ({i}, {j}) out of range")));
        }
    }
    let est = RigidEstimator {
        src: pairs.iter().map(|&(i, _)| src.points[i]).collect(),
        dst: pairs.iter().map(|&(_, j)| dst.points[j]).collect(),
    };
    let outcome = ransac::run(&est, &params.ransac_config()).ok_or_else(|| {
        Error::DegenerateConfiguration("no non-degenerate 3-point sample found".into())
    })?;
    let required = params.min_inliers.max(3);
    if outcome.inliers.len() < required {
        return Err(Error::NoConsensus { inliers: outcome.inliers.len(), required });
    }
    let rms = rms(outcome.inliers.iter().map(|&i| est.residual(&outcome.model, i)));
    let (r, t) = outcome.model;
    Ok(RegistrationResult {
        pose: Pose::new(r, t, dst.frame.clone(), src.frame.clone())?,
        correspondences: pairs.to_vec(),
        inlier_indices: outcome.inliers,
        rms_residual: rms,
        iterations_used: outcome.iterations,
    })
}

pub(crate) fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Matches `cloud0` against `cloud_x` and estimates the transform taking
/// cloud-0 coordinates into cloud-X coordinates (`cloud_x.frame ←
/// cloud0.frame`).
pub fn register_ransac3d(
    cloud0: &FeatureCloud,
    cloud_x: &FeatureCloud,
    params: &Ransac3dParams,
) -> Result<RegistrationResult> {
    params.validate()?;
    let matches = match_bruteforce_l2(&cloud0.descriptors, &cloud_x.descriptors, params.keep_ratio)
        .map_err(|e| match e {
            Error::EmptySet => Error::InsufficientMatches { found: 0, required: 3 },
            other => other,
        })?;
    let pairs: Vec<(usize, usize)> = matches.iter().map(|m| (m.query_idx, m.train_idx)).collect();
    let src = PointCloud { points: cloud0.points.clone(), frame: cloud0.frame.clone() };
    let dst = PointCloud { points: cloud_x.points.clone(), frame: cloud_x.frame.clone() };
    ransac_rigid(&src, &dst, &pairs, params)
}

/// Camera-X-from-camera-0 extrinsic from the cloud alignment:
/// `h_wx_cx · h_w0_wx · h_w0_c0⁻¹`.
///
/// Arguments are named after the transforms they carry: `h_wx_cx` takes
/// cloud-X coordinates into camera X (`CX ← WX`), `h_w0_wx` cloud-0 into
/// cloud-X (`WX ← W0`), `h_w0_c0` cloud-0 into camera 0 (`C0 ← W0`). The
/// product is labeled `CX ← C0`.
pub fn chain_extrinsic_ransac(h_wx_cx: &Pose, h_w0_wx: &Pose, h_w0_c0: &Pose) -> Result<Pose> {
    h_wx_cx.compose(h_w0_wx)?.compose(&h_w0_c0.inverse())
}

/// Human-readable frame chain for auditing the product order.
pub fn describe_chain(poses: &[&Pose]) -> String {
    poses
        .iter()
        .map(|p| format!("[{} <- {}]", p.parent(), p.child()))
        .collect::<Vec<_>>()
        .join(" * ")
}
