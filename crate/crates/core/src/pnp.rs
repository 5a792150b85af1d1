//! Single-image registration: a reference point cloud from camera 0 is
//! matched against keypoints of camera X, filtered with a robust
//! fundamental matrix, solved with RANSAC over a 6-point DLT and refined by
//! Levenberg–Marquardt on the reprojection error.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix6, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::camera::{
    lift_from_common_plane, project_camera_point, project_pinhole, project_to_common_plane,
    undistort, DistortionModel, PixelPoint, PlenopticIntrinsics, VirtualPoint,
};
use crate::error::{Error, Result, Stage};
use crate::features::{match_knn_crosscheck, FeatureCloud, FeatureImage, KeypointSpace};
use crate::ransac::{self, Estimator, RansacConfig};
use crate::ransac3d::{rms, Ransac3dParams, RegistrationResult};
use crate::se3::{frame, FrameId, Pose};

/// Minimal sample of the linear resection.
pub const PNP_SAMPLE_SIZE: usize = 6;
const FUNDAMENTAL_SAMPLE_SIZE: usize = 8;
const DLT_MAX_CONDITION: f64 = 1e8;
const COPLANAR_RATIO: f64 = 1e-4;
const FUNDAMENTAL_RANK_RATIO: f64 = 1e-8;

/// Frame label of the query camera in PnP results.
pub const CAMERA_X: &str = "CX";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PnpParams {
    /// RANSAC settings for the resection; `inlier_threshold` is in px.
    pub ransac: Ransac3dParams,
    /// Sampson distance threshold of the fundamental-matrix filter, px.
    pub fm_threshold: f64,
    pub lm_max_iters: usize,
    /// Relative cost decrease below which LM stops.
    pub lm_tolerance: f64,
    /// Neighbourhood size of the cross-check matcher.
    pub crosscheck_k: usize,
}

impl Default for PnpParams {
    fn default() -> Self {
        PnpParams {
            ransac: Ransac3dParams { inlier_threshold: 2.0, ..Default::default() },
            fm_threshold: 2.0,
            lm_max_iters: 100,
            lm_tolerance: 1e-10,
            crosscheck_k: 2,
        }
    }
}

impl PnpParams {
    pub fn validate(&self) -> Result<()> {
        self.ransac.validate()?;
        if !(self.fm_threshold > 0.0) {
            return Err(Error::InvalidParameter("fm_threshold must be > 0".into()));
        }
        if !(self.lm_tolerance > 0.0) {
            return Err(Error::InvalidParameter("lm_tolerance must be > 0".into()));
        }
        if self.crosscheck_k == 0 {
            return Err(Error::InvalidParameter("crosscheck_k must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.ransac.seed = seed;
        self
    }
}

/// Pixel on the corrected image of camera X and the matching 3D point of
/// the reference cloud (mm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence2d3d {
    pub pixel: PixelPoint,
    pub world: Vector3<f64>,
}

impl Correspondence2d3d {
    pub fn new(pixel: PixelPoint, world: Vector3<f64>) -> Result<Self> {
        if !(pixel.x.is_finite() && pixel.y.is_finite() && world.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidParameter("non-finite correspondence".into()));
        }
        Ok(Correspondence2d3d { pixel, world })
    }
}

// ---------------------------------------------------------------------------
// Linear algebra helpers

/// Right singular vector of the smallest singular value, plus the singular
/// values sorted in descending order. Short matrices are padded with zero
/// rows so the full right basis is available.
fn null_vector(a: &DMatrix<f64>) -> Option<(DVector<f64>, Vec<f64>)> {
    let cols = a.ncols();
    let a = if a.nrows() < cols {
        let mut padded = DMatrix::zeros(cols, cols);
        padded.rows_mut(0, a.nrows()).copy_from(a);
        padded
    } else {
        a.clone()
    };
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let smallest = *order.last()?;
    let sorted = order.iter().map(|&i| sv[i]).collect();
    Some((v_t.row(smallest).transpose(), sorted))
}

/// Similarity taking 2D points to zero mean and mean distance √2.
fn hartley(points: &[PixelPoint]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = points.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn homogeneous(p: &PixelPoint) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0)
}

// ---------------------------------------------------------------------------
// Fundamental matrix

/// Normalized 8-point estimate of `F` with `x_queryᵀ F x_ref = 0`, rank 2,
/// unit Frobenius norm.
pub fn fundamental_8point(pts_ref: &[PixelPoint], pts_query: &[PixelPoint]) -> Result<Matrix3<f64>> {
    if pts_ref.len() != pts_query.len() {
        return Err(Error::LengthMismatch { left: pts_ref.len(), right: pts_query.len() });
    }
    if pts_ref.len() < FUNDAMENTAL_SAMPLE_SIZE {
        return Err(Error::InsufficientCorrespondences {
            found: pts_ref.len(),
            required: FUNDAMENTAL_SAMPLE_SIZE,
        });
    }
    let t_ref = hartley(pts_ref);
    let t_query = hartley(pts_query);
    let mut a = DMatrix::zeros(pts_ref.len(), 9);
    for (row, (r, q)) in pts_ref.iter().zip(pts_query).enumerate() {
        let x = t_ref * homogeneous(r);
        let y = t_query * homogeneous(q);
        for i in 0..3 {
            for j in 0..3 {
                a[(row, 3 * i + j)] = y[i] * x[j];
            }
        }
    }
    let (f, sv) = null_vector(&a)
        .ok_or_else(|| Error::DegenerateConfiguration("SVD failed".into()))?;
    if sv[0] == 0.0 || sv[7] / sv[0] < FUNDAMENTAL_RANK_RATIO {
        return Err(Error::DegenerateConfiguration(
            "epipolar constraints have a multi-dimensional solution space".into(),
        ));
    }
    let f_norm = Matrix3::from_row_slice(f.as_slice());
    let svd = f_norm.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD failed".into())),
    };
    let mut s = svd.singular_values;
    let min = s.imin();
    s[min] = 0.0;
    let f_rank2 = u * Matrix3::from_diagonal(&s) * v_t;
    let f = t_query.transpose() * f_rank2 * t_ref;
    let norm = f.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateConfiguration("vanishing fundamental matrix".into()));
    }
    Ok(f / norm)
}

/// First-order geometric (Sampson) distance of a pair to `F`, in px.
pub fn sampson_distance(f: &Matrix3<f64>, p_ref: &PixelPoint, p_query: &PixelPoint) -> f64 {
    let x = homogeneous(p_ref);
    let y = homogeneous(p_query);
    let fx = f * x;
    let fty = f.transpose() * y;
    let e = y.dot(&fx);
    let denom = fx.x * fx.x + fx.y * fx.y + fty.x * fty.x + fty.y * fty.y;
    if denom > 0.0 {
        e.abs() / denom.sqrt()
    } else if e == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

struct FundamentalEstimator<'a> {
    pts_ref: &'a [PixelPoint],
    pts_query: &'a [PixelPoint],
}

impl Estimator for FundamentalEstimator<'_> {
    type Model = Matrix3<f64>;

    fn sample_size(&self) -> usize {
        FUNDAMENTAL_SAMPLE_SIZE
    }

    fn len(&self) -> usize {
        self.pts_ref.len()
    }

    fn is_degenerate(&self, _: &[usize]) -> bool {
        false
    }

    fn fit(&self, sample: &[usize]) -> Option<Matrix3<f64>> {
        let r: Vec<_> = sample.iter().map(|&i| self.pts_ref[i]).collect();
        let q: Vec<_> = sample.iter().map(|&i| self.pts_query[i]).collect();
        fundamental_8point(&r, &q).ok()
    }

    fn residual(&self, f: &Matrix3<f64>, i: usize) -> f64 {
        sampson_distance(f, &self.pts_ref[i], &self.pts_query[i])
    }
}

pub(crate) fn fundamental_ransac_with(
    pts_ref: &[PixelPoint],
    pts_query: &[PixelPoint],
    cfg: &RansacConfig,
) -> Result<(Matrix3<f64>, Vec<bool>)> {
    if pts_ref.len() != pts_query.len() {
        return Err(Error::LengthMismatch { left: pts_ref.len(), right: pts_query.len() });
    }
    if pts_ref.len() < FUNDAMENTAL_SAMPLE_SIZE {
        return Err(Error::InsufficientCorrespondences {
            found: pts_ref.len(),
            required: FUNDAMENTAL_SAMPLE_SIZE,
        });
    }
    let est = FundamentalEstimator { pts_ref, pts_query };
    let outcome = ransac::run(&est, cfg).ok_or_else(|| {
        Error::DegenerateConfiguration("no 8-point sample yields a fundamental matrix".into())
    })?;
    let mut mask = vec![false; pts_ref.len()];
    for &i in &outcome.inliers {
        mask[i] = true;
    }
    Ok((outcome.model, mask))
}

/// Robust fundamental matrix with an inlier mask by Sampson distance.
pub fn fundamental_8point_ransac(
    pts_ref: &[PixelPoint],
    pts_query: &[PixelPoint],
    threshold: f64,
    seed: u64,
) -> Result<(Matrix3<f64>, Vec<bool>)> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter("threshold must be > 0".into()));
    }
    let defaults = Ransac3dParams::default();
    fundamental_ransac_with(
        pts_ref,
        pts_query,
        &RansacConfig {
            max_iterations: defaults.max_iterations,
            threshold,
            confidence: defaults.confidence,
            seed,
            parallel: false,
        },
    )
}

// ---------------------------------------------------------------------------
// Resection

fn normalized(p: &PixelPoint, k: &PlenopticIntrinsics) -> (f64, f64) {
    ((p.x - k.c_x) / k.f_px, (p.y - k.c_y) / k.f_px)
}

fn coplanarity(points: &[Vector3<f64>]) -> f64 {
    let n = points.len() as f64;
    let c = points.iter().sum::<Vector3<f64>>() / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - c;
        scatter += d * d.transpose();
    }
    let mut ev: Vec<f64> = scatter.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] == 0.0 {
        0.0
    } else {
        ev[2] / ev[0]
    }
}

/// Linear camera resection from at least six correspondences; returns the
/// camera ← world rotation and translation.
pub fn pnp_dlt(
    corrs: &[Correspondence2d3d],
    k: &PlenopticIntrinsics,
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    if corrs.len() < PNP_SAMPLE_SIZE {
        return Err(Error::InsufficientCorrespondences {
            found: corrs.len(),
            required: PNP_SAMPLE_SIZE,
        });
    }
    let pts: Vec<Vector3<f64>> = corrs.iter().map(|c| c.world).collect();
    if coplanarity(&pts) < COPLANAR_RATIO {
        return Err(Error::DegenerateConfiguration("resection points are coplanar".into()));
    }
    let n = pts.len() as f64;
    let centroid = pts.iter().sum::<Vector3<f64>>() / n;
    let mean_dist = pts.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    let s = 3f64.sqrt() / mean_dist;

    let mut a = DMatrix::zeros(2 * corrs.len(), 12);
    for (i, c) in corrs.iter().enumerate() {
        let x = (c.world - centroid) * s;
        let (u, v) = normalized(&c.pixel, k);
        let xh = [x.x, x.y, x.z, 1.0];
        for j in 0..4 {
            a[(2 * i, j)] = xh[j];
            a[(2 * i, 8 + j)] = -u * xh[j];
            a[(2 * i + 1, 4 + j)] = xh[j];
            a[(2 * i + 1, 8 + j)] = -v * xh[j];
        }
    }
    let (p, sv) = null_vector(&a).ok_or_else(|| Error::DegenerateConfiguration("SVD failed".into()))?;
    if sv[10] == 0.0 || sv[0] / sv[10] > DLT_MAX_CONDITION {
        return Err(Error::DegenerateConfiguration("ill-conditioned resection".into()));
    }
    let p_norm = Matrix3x4::from_row_slice(p.as_slice());
    let mut denorm = nalgebra::Matrix4::identity() * s;
    denorm[(3, 3)] = 1.0;
    denorm.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-s * centroid));
    let mut p = p_norm * denorm;
    let mut m: Matrix3<f64> = p.fixed_view::<3, 3>(0, 0).into_owned();
    if m.determinant() < 0.0 {
        p = -p;
        m = -m;
    }
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD failed".into())),
    };
    let scale = svd.singular_values.sum() / 3.0;
    if !(scale > 0.0) {
        return Err(Error::DegenerateConfiguration("vanishing projection matrix".into()));
    }
    let r = u * v_t;
    let t = p.column(3).into_owned() / scale;
    Ok((r, t))
}

fn reprojection_error(r: &Matrix3<f64>, t: &Vector3<f64>, c: &Correspondence2d3d, k: &PlenopticIntrinsics) -> f64 {
    match project_camera_point(&(r * c.world + t), k) {
        Ok(p) => p.distance(&c.pixel),
        Err(_) => f64::INFINITY,
    }
}

struct PnpEstimator<'a> {
    corrs: &'a [Correspondence2d3d],
    k: &'a PlenopticIntrinsics,
    lm: LmConfig,
}

impl Estimator for PnpEstimator<'_> {
    type Model = (Matrix3<f64>, Vector3<f64>);

    fn sample_size(&self) -> usize {
        PNP_SAMPLE_SIZE
    }

    fn len(&self) -> usize {
        self.corrs.len()
    }

    fn is_degenerate(&self, sample: &[usize]) -> bool {
        let pts: Vec<_> = sample.iter().map(|&i| self.corrs[i].world).collect();
        coplanarity(&pts) < COPLANAR_RATIO
    }

    fn fit(&self, sample: &[usize]) -> Option<Self::Model> {
        let c: Vec<_> = sample.iter().map(|&i| self.corrs[i]).collect();
        pnp_dlt(&c, self.k).ok()
    }

    fn refit(&self, inliers: &[usize]) -> Option<Self::Model> {
        let c: Vec<_> = inliers.iter().map(|&i| self.corrs[i]).collect();
        let (r, t) = pnp_dlt(&c, self.k).ok()?;
        let initial = Pose::from_parts_projected(&r, t, frame(CAMERA_X), frame("W0")).ok()?;
        let out = refine_lm_with(&initial, &c, self.k, &self.lm).ok()?;
        Some((*out.pose.rotation(), *out.pose.translation()))
    }

    fn residual(&self, (r, t): &Self::Model, i: usize) -> f64 {
        reprojection_error(r, t, &self.corrs[i], self.k)
    }
}

fn pnp_ransac_inner(
    corrs: &[Correspondence2d3d],
    k: &PlenopticIntrinsics,
    params: &PnpParams,
    child: FrameId,
) -> Result<RegistrationResult> {
    params.validate()?;
    if corrs.len() < PNP_SAMPLE_SIZE {
        return Err(Error::InsufficientCorrespondences {
            found: corrs.len(),
            required: PNP_SAMPLE_SIZE,
        });
    }
    let est = PnpEstimator {
        corrs,
        k,
        lm: LmConfig { max_iters: params.lm_max_iters, tolerance: params.lm_tolerance },
    };
    let outcome = ransac::run(&est, &params.ransac.ransac_config()).ok_or_else(|| {
        Error::DegenerateConfiguration("no non-degenerate 6-point sample found".into())
    })?;
    let required = params.ransac.min_inliers.max(PNP_SAMPLE_SIZE);
    if outcome.inliers.len() < required {
        return Err(Error::NoConsensus { inliers: outcome.inliers.len(), required });
    }
    let residual = rms(outcome.inliers.iter().map(|&i| est.residual(&outcome.model, i)));
    let (r, t) = outcome.model;
    Ok(RegistrationResult {
        pose: Pose::from_parts_projected(&r, t, frame(CAMERA_X), child)?,
        correspondences: (0..corrs.len()).map(|i| (i, i)).collect(),
        inlier_indices: outcome.inliers,
        rms_residual: residual,
        iterations_used: outcome.iterations,
    })
}

/// RANSAC resection. The pose is labeled `CX ← W0`; inliers are those with
/// reprojection error ≤ `params.ransac.inlier_threshold`.
pub fn pnp_ransac(
    corrs: &[Correspondence2d3d],
    k: &PlenopticIntrinsics,
    params: &PnpParams,
) -> Result<RegistrationResult> {
    pnp_ransac_inner(corrs, k, params, frame("W0"))
}

// ---------------------------------------------------------------------------
// Levenberg–Marquardt

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmConfig {
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { max_iters: 100, tolerance: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmOutcome {
    pub pose: Pose,
    /// False when the iteration budget ran out before a stopping test held.
    pub converged: bool,
    pub iterations: usize,
    /// Sum of squared residuals, initial value followed by each accepted step.
    pub cost_history: Vec<f64>,
    pub initial_rms: f64,
    pub final_rms: f64,
}

/// Applies the increment `[ω, δt]`: `R ← Exp(ω) R`, `t ← t + δt`.
pub fn apply_increment(pose: &Pose, delta: &Vector6<f64>) -> Pose {
    let omega = Vector3::new(delta[0], delta[1], delta[2]);
    let dt = Vector3::new(delta[3], delta[4], delta[5]);
    let r = Rotation3::new(omega).into_inner() * pose.rotation();
    let t = pose.translation() + dt;
    Pose::from_parts_projected(&r, t, pose.parent().clone(), pose.child().clone())
        .expect("increment keeps the rotation proper")
}

/// Stacked reprojection residuals `[u − u_obs, v − v_obs, ...]`.
pub fn reprojection_residuals(
    pose: &Pose,
    corrs: &[Correspondence2d3d],
    k: &PlenopticIntrinsics,
) -> Result<DVector<f64>> {
    let mut r = DVector::zeros(2 * corrs.len());
    for (i, c) in corrs.iter().enumerate() {
        let p = project_pinhole(&c.world, pose, k)?;
        r[2 * i] = p.x - c.pixel.x;
        r[2 * i + 1] = p.y - c.pixel.y;
    }
    Ok(r)
}

/// Analytic Jacobian of [`reprojection_residuals`] with respect to the
/// increment of [`apply_increment`], evaluated at zero.
pub fn reprojection_jacobian(
    pose: &Pose,
    corrs: &[Correspondence2d3d],
    k: &PlenopticIntrinsics,
) -> Result<DMatrix<f64>> {
    let mut j = DMatrix::zeros(2 * corrs.len(), 6);
    for (i, c) in corrs.iter().enumerate() {
        let rp = pose.rotation() * c.world;
        let pc = rp + pose.translation();
        if !(pc.z > 0.0) {
            return Err(Error::BehindCamera { z: pc.z });
        }
        let (x, y, z) = (pc.x, pc.y, pc.z);
        let f = k.f_px;
        let dproj = nalgebra::Matrix2x3::new(f / z, 0.0, -f * x / (z * z), 0.0, f / z, -f * y / (z * z));
        let d_omega = -rp.cross_matrix();
        j.fixed_view_mut::<2, 3>(2 * i, 0).copy_from(&(dproj * d_omega));
        j.fixed_view_mut::<2, 3>(2 * i, 3).copy_from(&dproj);
    }
    Ok(j)
}

/// Levenberg–Marquardt minimisation of the reprojection error with default
/// stopping rules.
pub fn refine_lm(
    initial: &Pose,
    corrs: &[Correspondence2d3d],
    k: &PlenopticIntrinsics,
) -> Result<LmOutcome> {
    refine_lm_with(initial, corrs, k, &LmConfig::default())
}

pub fn refine_lm_with(
    initial: &Pose,
    corrs: &[Correspondence2d3d],
    k: &PlenopticIntrinsics,
    cfg: &LmConfig,
) -> Result<LmOutcome> {
    if corrs.len() < PNP_SAMPLE_SIZE {
        return Err(Error::InsufficientCorrespondences {
            found: corrs.len(),
            required: PNP_SAMPLE_SIZE,
        });
    }
    let n = corrs.len() as f64;
    let mut pose = initial.clone();
    let mut cost = reprojection_residuals(&pose, corrs, k)?.norm_squared();
    let initial_rms = (cost / n).sqrt();
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < cfg.max_iters {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let r = reprojection_residuals(&pose, corrs, k)?;
        let j = reprojection_jacobian(&pose, corrs, k)?;
        let g: Vector6<f64> = (j.transpose() * &r).fixed_rows::<6>(0).into_owned();
        let h: Matrix6<f64> = (j.transpose() * &j).fixed_view::<6, 6>(0, 0).into_owned();
        if g.iter().all(|v| *v == 0.0) {
            converged = true;
            break;
        }
        let floor = 1e-12 * h.diagonal().amax();
        loop {
            let mut damped = h;
            for d in 0..6 {
                damped[(d, d)] += lambda * h[(d, d)].max(floor);
            }
            let step = damped.cholesky().map(|c| c.solve(&(-g)));
            if let Some(step) = step {
                let candidate = apply_increment(&pose, &step);
                let new_cost = reprojection_residuals(&candidate, corrs, k)
                    .map(|r| r.norm_squared())
                    .unwrap_or(f64::INFINITY);
                if new_cost < cost {
                    let decrease = (cost - new_cost) / cost;
                    pose = candidate;
                    cost = new_cost;
                    history.push(cost);
                    lambda = (lambda / 10.0).max(1e-12);
                    if decrease < cfg.tolerance {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // no descent direction left at machine precision
                converged = true;
                break 'outer;
            }
        }
    }
    Ok(LmOutcome {
        pose,
        converged,
        iterations,
        initial_rms,
        final_rms: (cost / n).sqrt(),
        cost_history: history,
    })
}

// ---------------------------------------------------------------------------
// Chain and pipeline

/// Camera-X-from-camera-0 extrinsic from the two camera ← cloud poses:
/// `h_w0_cx · h_w0_c0⁻¹`, labeled `CX ← C0`.
pub fn chain_extrinsic_pnp(h_w0_cx: &Pose, h_w0_c0: &Pose) -> Result<Pose> {
    h_w0_cx.compose(&h_w0_c0.inverse())
}

/// Camera 0 as needed to place the reference cloud on its corrected image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCamera {
    /// `C0 ← W0`.
    pub pose: Pose,
    pub intrinsics: PlenopticIntrinsics,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PnpDiagnostics {
    pub keypoints: usize,
    pub cloud_points: usize,
    pub matches: usize,
    /// Matches whose cloud point lies behind camera 0.
    pub dropped_behind_reference: usize,
    pub fundamental_inliers: Option<usize>,
    /// Reason the fundamental filter was bypassed, if it was.
    pub fundamental_skipped: Option<String>,
    pub pnp_candidates: usize,
    pub pnp_inliers: usize,
    pub pnp_inlier_ratio: f64,
    pub ransac_rms_px: f64,
    pub lm_converged: bool,
    pub lm_iterations: usize,
    pub lm_initial_rms_px: f64,
    pub lm_final_rms_px: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PnpRegistration {
    /// `CX ← C0`; correspondences are (cloud index, keypoint index).
    pub result: RegistrationResult,
    /// Refined `CX ← W0`.
    pub camera_pose: Pose,
    pub diagnostics: PnpDiagnostics,
}

/// Keypoints of `image` on the corrected image plane.
pub fn corrected_keypoints(
    image: &FeatureImage,
    k: &PlenopticIntrinsics,
    d: &DistortionModel,
) -> Result<Vec<PixelPoint>> {
    match image.space {
        KeypointSpace::Corrected => Ok(image.keypoints.clone()),
        KeypointSpace::Distorted => image
            .keypoints
            .iter()
            .map(|p| undistort(p, d, k).map_err(|e| e.at(Stage::Undistort)))
            .collect(),
        KeypointSpace::Virtual => {
            let depths = image
                .depths
                .as_ref()
                .ok_or_else(|| Error::MissingField("virtual depths".into()))?;
            image
                .keypoints
                .iter()
                .zip(depths)
                .map(|(p, &v)| {
                    let u = undistort(p, d, k).map_err(|e| e.at(Stage::Undistort))?;
                    project_to_common_plane(&VirtualPoint { x: u.x, y: u.y, v }, k)
                        .map_err(|e| e.at(Stage::Projection))
                })
                .collect()
        }
    }
}

/// Inverse of the virtual branch of [`corrected_keypoints`] for one point.
pub fn virtual_keypoint(
    corrected: &PixelPoint,
    v: f64,
    k: &PlenopticIntrinsics,
    d: &DistortionModel,
) -> Result<PixelPoint> {
    let lifted = lift_from_common_plane(corrected, v, k)?;
    Ok(crate::camera::distort(&PixelPoint::new(lifted.x, lifted.y), d, k))
}

/// Full single-image registration of camera X against the reference cloud.
pub fn register_pnp_pipeline(
    image: &FeatureImage,
    cloud0: &FeatureCloud,
    k: &PlenopticIntrinsics,
    d: &DistortionModel,
    reference: &ReferenceCamera,
    params: &PnpParams,
) -> Result<PnpRegistration> {
    params.validate()?;
    k.validate()?;
    if reference.pose.child() != &cloud0.frame {
        return Err(Error::frames(&cloud0.frame, reference.pose.child()).at(Stage::Chain));
    }
    let mut diag = PnpDiagnostics {
        keypoints: image.len(),
        cloud_points: cloud0.len(),
        ..Default::default()
    };

    let pixels = corrected_keypoints(image, k, d)?;

    let matches = match_knn_crosscheck(&image.descriptors, &cloud0.descriptors, params.crosscheck_k)
        .map_err(|e| e.at(Stage::Matching))?;
    diag.matches = matches.len();

    let mut pts_ref = Vec::with_capacity(matches.len());
    let mut pts_query = Vec::with_capacity(matches.len());
    let mut pairs = Vec::with_capacity(matches.len());
    for m in &matches {
        match project_pinhole(&cloud0.points[m.train_idx], &reference.pose, &reference.intrinsics) {
            Ok(p) => {
                pts_ref.push(p);
                pts_query.push(pixels[m.query_idx]);
                pairs.push((m.train_idx, m.query_idx));
            }
            Err(Error::BehindCamera { .. }) => diag.dropped_behind_reference += 1,
            Err(e) => return Err(e.at(Stage::Projection)),
        }
    }

    let cfg = RansacConfig { threshold: params.fm_threshold, ..params.ransac.ransac_config() };
    let keep: Vec<bool> = match fundamental_ransac_with(&pts_ref, &pts_query, &cfg) {
        Ok((_, mask)) => {
            diag.fundamental_inliers = Some(mask.iter().filter(|&&b| b).count());
            mask
        }
        Err(e @ (Error::DegenerateConfiguration(_) | Error::InsufficientCorrespondences { .. })) => {
            diag.fundamental_skipped = Some(e.to_string());
            vec![true; pairs.len()]
        }
        Err(e) => return Err(e.at(Stage::Fundamental)),
    };
    let pairs: Vec<(usize, usize)> = pairs.into_iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| p).collect();
    let corrs: Vec<Correspondence2d3d> = pairs
        .iter()
        .map(|&(c, q)| Correspondence2d3d { pixel: pixels[q], world: cloud0.points[c] })
        .collect();
    diag.pnp_candidates = corrs.len();

    let initial = pnp_ransac_inner(&corrs, k, params, cloud0.frame.clone()).map_err(|e| e.at(Stage::Pnp))?;
    diag.pnp_inliers = initial.inlier_indices.len();
    diag.pnp_inlier_ratio = initial.inlier_indices.len() as f64 / corrs.len() as f64;
    diag.ransac_rms_px = initial.rms_residual;

    let inlier_corrs: Vec<_> = initial.inlier_indices.iter().map(|&i| corrs[i]).collect();
    let lm = refine_lm_with(
        &initial.pose,
        &inlier_corrs,
        k,
        &LmConfig { max_iters: params.lm_max_iters, tolerance: params.lm_tolerance },
    )
    .map_err(|e| e.at(Stage::Refinement))?;
    diag.lm_converged = lm.converged;
    diag.lm_iterations = lm.iterations;
    diag.lm_initial_rms_px = lm.initial_rms;
    diag.lm_final_rms_px = lm.final_rms;

    let extrinsic = chain_extrinsic_pnp(&lm.pose, &reference.pose).map_err(|e| e.at(Stage::Chain))?;
    Ok(PnpRegistration {
        result: RegistrationResult {
            pose: extrinsic,
            correspondences: pairs,
            inlier_indices: initial.inlier_indices,
            rms_residual: lm.final_rms,
            iterations_used: initial.iterations_used,
        },
        camera_pose: lm.pose,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::DescriptorSet;
    use crate::se3::{rotation_angle, translation_error};
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k() -> PlenopticIntrinsics {
        PlenopticIntrinsics::raytrix_r32()
    }

    fn scene(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.random_range(-400.0..400.0), rng.random_range(-300.0..300.0), rng.random_range(1600.0..2400.0)))
            .collect()
    }

    fn corrs_for(pose: &Pose, pts: &[Vector3<f64>]) -> Vec<Correspondence2d3d> {
        pts.iter()
            .map(|p| Correspondence2d3d { pixel: project_pinhole(p, pose, &k()).unwrap(), world: *p })
            .collect()
    }

    fn pose_about(rng: &mut ChaCha8Rng, deg: f64, t: f64) -> Pose {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
        Pose::from_axis_angle(&axis, deg.to_radians(), dir * t, frame(CAMERA_X), frame("W0")).unwrap()
    }

    fn id_pose() -> Pose {
        Pose::identity(frame(CAMERA_X), frame("W0"))
    }

    #[test]
    fn dlt_exact_on_noiseless_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = pose_about(&mut rng, 10.0, 100.0);
        let pts = scene(&mut rng, 6);
        let (r, t) = pnp_dlt(&corrs_for(&truth, &pts), &k()).unwrap();
        assert!((r - truth.rotation()).abs().max() < 1e-8);
        assert!((t - truth.translation()).abs().max() < 1e-5);
    }

    #[test]
    fn dlt_rejects_coplanar_points() {
        let pts: Vec<_> = (0..8).map(|i| Vector3::new(i as f64 * 30.0, (i * i) as f64 * 7.0, 2000.0)).collect();
        assert!(matches!(pnp_dlt(&corrs_for(&id_pose(), &pts), &k()), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn pnp_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = scene(&mut rng, 30);
        let res = pnp_ransac(&corrs_for(&id_pose(), &pts), &k(), &PnpParams::default()).unwrap();
        assert!(rotation_angle(&res.pose, &id_pose()).unwrap() < 1e-6);
        assert!(translation_error(&res.pose, &id_pose()).unwrap() < 1e-3);
        assert_eq!(res.inlier_indices.len(), 30);
    }

    #[test]
    fn pnp_too_few() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = scene(&mut rng, 5);
        assert!(matches!(
            pnp_ransac(&corrs_for(&id_pose(), &pts), &k(), &PnpParams::default()),
            Err(Error::InsufficientCorrespondences { found: 5, required: 6 })
        ));
    }

    #[test]
    fn pnp_with_planar_subset_and_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = pose_about(&mut rng, 25.0, 400.0);
        // half of the scene on one plane, so many samples are degenerate
        let mut pts = scene(&mut rng, 20);
        pts.extend((0..20).map(|i| Vector3::new((i % 5) as f64 * 80.0 - 200.0, (i / 5) as f64 * 60.0, 2000.0)));
        let mut corrs = corrs_for(&truth, &pts);
        for c in corrs.iter_mut().step_by(4) {
            c.pixel.x += rng.random_range(50.0..300.0);
        }
        let res = pnp_ransac(&corrs, &k(), &PnpParams::default()).unwrap();
        assert!(rotation_angle(&res.pose, &truth).unwrap() < 1e-6);
        assert!(translation_error(&res.pose, &truth).unwrap() < 1e-3);
        assert!(res.inlier_indices.iter().all(|i| i % 4 != 0));
    }

    #[test]
    fn pnp_permutation_invariant_on_noiseless_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = pose_about(&mut rng, 15.0, 200.0);
        let pts = scene(&mut rng, 25);
        let corrs = corrs_for(&truth, &pts);
        let mut shuffled = corrs.clone();
        shuffled.reverse();
        let a = pnp_ransac(&corrs, &k(), &PnpParams::default()).unwrap();
        let b = pnp_ransac(&shuffled, &k(), &PnpParams::default()).unwrap();
        assert!((a.pose.to_homogeneous() - b.pose.to_homogeneous()).abs().max() < 1e-6);
        assert!(rotation_angle(&a.pose, &b.pose).unwrap() < 1e-9);
    }

    #[test]
    fn lm_stationary_at_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let truth = pose_about(&mut rng, 20.0, 300.0);
        let corrs = corrs_for(&truth, &scene(&mut rng, 20));
        let out = refine_lm(&truth, &corrs, &k()).unwrap();
        assert!(out.converged);
        assert!((out.pose.to_homogeneous() - truth.to_homogeneous()).abs().max() < 1e-9);
    }

    #[test]
    fn lm_basin_of_attraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth = pose_about(&mut rng, 20.0, 300.0);
        let corrs = corrs_for(&truth, &scene(&mut rng, 40));
        let axis = Vector3::new(0.3, -0.5, 0.8).normalize();
        let delta = Vector6::new(axis.x, axis.y, axis.z, 0.0, 0.0, 0.0) * 2f64.to_radians()
            + Vector6::new(0.0, 0.0, 0.0, 12.0, -16.0, 0.0);
        let start = apply_increment(&truth, &delta);
        let out = refine_lm(&start, &corrs, &k()).unwrap();
        assert!(out.converged);
        assert!(rotation_angle(&out.pose, &truth).unwrap() < 1e-6);
        assert!(translation_error(&out.pose, &truth).unwrap() < 1e-3);
        assert!(out.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.final_rms <= out.initial_rms);
    }

    #[test]
    fn chain_examples() {
        let id = |p: &str, c: &str| Pose::identity(frame(p), frame(c));
        assert_eq!(chain_extrinsic_pnp(&id("CX", "W0"), &id("C0", "W0")).unwrap(), id("CX", "C0"));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = pose_about(&mut rng, 30.0, 500.0);
        let same = a.relabeled(frame("C0"), frame("W0"));
        let out = chain_extrinsic_pnp(&a, &same).unwrap();
        assert!((out.to_homogeneous() - Matrix4::identity()).abs().max() < 1e-12);
        let b = pose_about(&mut rng, 70.0, 500.0).relabeled(frame("C0"), frame("W0"));
        let want = a.to_homogeneous() * b.to_homogeneous().try_inverse().unwrap();
        assert!((chain_extrinsic_pnp(&a, &b).unwrap().to_homogeneous() - want).abs().max() < 1e-12);
        assert!(matches!(chain_extrinsic_pnp(&a, &a.inverse()), Err(Error::FrameMismatch { .. })));
    }

    fn two_view(rng: &mut ChaCha8Rng, n: usize) -> (Vec<PixelPoint>, Vec<PixelPoint>) {
        let cam0 = Pose::identity(frame("C"), frame("W"));
        let cam1 = pose_about(rng, 8.0, 300.0).relabeled(frame("C"), frame("W"));
        let pts = scene(rng, n);
        let a = pts.iter().map(|p| project_pinhole(p, &cam0, &k()).unwrap()).collect();
        let b = pts.iter().map(|p| project_pinhole(p, &cam1, &k()).unwrap()).collect();
        (a, b)
    }

    #[test]
    fn fundamental_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (a, b) = two_view(&mut rng, 40);
        let (f, mask) = fundamental_8point_ransac(&a, &b, 1.0, 1).unwrap();
        assert!(mask.iter().all(|&m| m));
        let svd = f.svd(false, false);
        assert!(svd.singular_values.min() < 1e-12);
        for (p, q) in a.iter().zip(&b) {
            let x = homogeneous(p);
            let y = homogeneous(q);
            assert!((y.dot(&(f * x)) / (x.norm() * y.norm())).abs() < 1e-9);
        }
    }

    #[test]
    fn fundamental_too_few() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (a, b) = two_view(&mut rng, 7);
        assert!(matches!(
            fundamental_8point_ransac(&a, &b, 1.0, 1),
            Err(Error::InsufficientCorrespondences { found: 7, required: 8 })
        ));
    }

    #[test]
    fn fundamental_rejects_mismatches() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (a, mut b) = two_view(&mut rng, 100);
        let outliers: Vec<usize> = (0..100).filter(|i| i % 5 == 0).collect();
        for &i in &outliers {
            b[i] = PixelPoint::new(rng.random_range(0.0..6560.0), rng.random_range(0.0..4948.0));
        }
        let (f, mask) = fundamental_8point_ransac(&a, &b, 2.0, 3).unwrap();
        let rejected = outliers.iter().filter(|&&i| !mask[i]).count();
        assert!(rejected as f64 >= 0.95 * outliers.len() as f64);
        for i in (0..100).filter(|&i| mask[i]) {
            assert!(sampson_distance(&f, &a[i], &b[i]) <= 2.0);
        }
    }

    #[test]
    fn fundamental_identical_views_are_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (a, _) = two_view(&mut rng, 20);
        assert!(matches!(fundamental_8point_ransac(&a, &a, 1.0, 1), Err(Error::DegenerateConfiguration(_))));
    }

    fn pipeline_inputs(rng: &mut ChaCha8Rng, camera_x: &Pose, space: KeypointSpace) -> (FeatureImage, FeatureCloud, ReferenceCamera, DistortionModel) {
        let reference = ReferenceCamera {
            pose: pose_about(rng, 5.0, 50.0).relabeled(frame("C0"), frame("W0")),
            intrinsics: k(),
        };
        let d = DistortionModel { k1: -0.05, k2: 0.01, p1: 1e-4, ..Default::default() };
        let pts = scene(rng, 60);
        let rows: Vec<Vec<f32>> = (0..60).map(|i| vec![i as f32, 0.5 * i as f32]).collect();
        let cloud = FeatureCloud::new(frame("W0"), pts.clone(), DescriptorSet::from_rows(&rows).unwrap()).unwrap();
        let mut kps = Vec::new();
        let mut depths = Vec::new();
        for p in &pts {
            let px = project_pinhole(p, camera_x, &k()).unwrap();
            match space {
                KeypointSpace::Corrected => kps.push(px),
                KeypointSpace::Distorted => kps.push(crate::camera::distort(&px, &d, &k())),
                KeypointSpace::Virtual => {
                    let v = rng.random_range(2.0..5.0);
                    kps.push(virtual_keypoint(&px, v, &k(), &d).unwrap());
                    depths.push(v);
                }
            }
        }
        let depths = (space == KeypointSpace::Virtual).then_some(depths);
        let image = FeatureImage::new(space, kps, depths, DescriptorSet::from_rows(&rows).unwrap()).unwrap();
        (image, cloud, reference, d)
    }

    #[test]
    fn pipeline_recovers_extrinsic_in_every_space() {
        for (seed, space) in [(13, KeypointSpace::Corrected), (14, KeypointSpace::Distorted), (15, KeypointSpace::Virtual)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let camera_x = pose_about(&mut rng, 20.0, 300.0);
            let (image, cloud, reference, d) = pipeline_inputs(&mut rng, &camera_x, space);
            let out = register_pnp_pipeline(&image, &cloud, &k(), &d, &reference, &PnpParams::default()).unwrap();
            let truth = chain_extrinsic_pnp(&camera_x, &reference.pose).unwrap();
            assert!(rotation_angle(&out.result.pose, &truth).unwrap() < 1e-6, "{space:?}");
            assert!(translation_error(&out.result.pose, &truth).unwrap() < 1e-3, "{space:?}");
            assert_eq!(out.diagnostics.matches, 60);
            assert_eq!(out.diagnostics.fundamental_inliers, Some(60));
        }
    }

    #[test]
    fn pipeline_camera_x_equals_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let (image, cloud, reference, d) = {
            let placeholder = id_pose();
            let (_, cloud, reference, d) = pipeline_inputs(&mut rng, &placeholder, KeypointSpace::Corrected);
            let camera_x = reference.pose.relabeled(frame(CAMERA_X), frame("W0"));
            let kps = cloud.points.iter().map(|p| project_pinhole(p, &camera_x, &k()).unwrap()).collect();
            let image = FeatureImage::new(KeypointSpace::Corrected, kps, None, cloud.descriptors.clone()).unwrap();
            (image, cloud, reference, d)
        };
        let out = register_pnp_pipeline(&image, &cloud, &k(), &d, &reference, &PnpParams::default()).unwrap();
        assert!((out.result.pose.to_homogeneous() - Matrix4::identity()).abs().max() < 1e-6);
        assert!(out.diagnostics.fundamental_skipped.is_some());
    }

    #[test]
    fn pipeline_five_matches_fail_at_pnp() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let camera_x = pose_about(&mut rng, 10.0, 100.0);
        let (image, cloud, reference, d) = pipeline_inputs(&mut rng, &camera_x, KeypointSpace::Corrected);
        let keep = [0, 1, 2, 3, 4];
        let image = FeatureImage::new(
            KeypointSpace::Corrected,
            keep.iter().map(|&i| image.keypoints[i]).collect(),
            None,
            image.descriptors.select(&keep),
        )
        .unwrap();
        let err = register_pnp_pipeline(&image, &cloud, &k(), &d, &reference, &PnpParams::default()).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::Pnp));
        assert!(matches!(err.root(), Error::InsufficientCorrespondences { found: 5, .. }));
    }
}
