//! Motion compensation: recover the object motion from camera clouds, gate
//! on the fiducial error, re-target the remaining sweep, stitch the
//! before-motion frames onto the after-motion ones, and compound.

mod compound;
mod sweep;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{poisson_disc_sample, principal_axes, with_estimated_normals, GeomError, Mat3, PointCloud, RigidTransform, Vec3};
use crate::imaging::ImageError;
use crate::planner::{pixel_to_probe, CalibrationSet, PlannerError, Trajectory};
use crate::registration::{align, icp_refine_point_to_plane, AlignParams, IcpParams, RegistrationError};

pub use compound::{compound_sweeps, stitching_gap, CompoundMode, CompoundVolume};
pub use sweep::{mask_centroid, SweepFrame, SweepRecord};

/// Fiducial error above which a compensation is rejected, mm.
pub const DEFAULT_EMC_GATE: f64 = 10.0;
/// Fewest points either cloud may have for motion registration.
pub const MIN_CLOUD_POINTS: usize = 50;

#[derive(Debug, Error)]
pub enum CompensateError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("compensation rejected: e_mc {e_mc:.2} mm >= gate {gate:.2} mm")]
    Rejected { e_mc: f64, gate: f64 },
    #[error("stitching gap undefined: {0}")]
    UndefinedGap(String),
    #[error("malformed sweep record: {0}")]
    Parse(String),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where scanning stopped when motion was detected.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakPoint {
    /// Last waypoint imaged before the motion; scanning resumes here.
    pub waypoint: usize,
    /// Executed probe pose at that waypoint.
    pub probe_pose: RigidTransform<f64>,
    /// Index of that frame in the before-motion sweep record.
    pub frame: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompensationResult {
    /// Recovered motion: maps pre-motion base coordinates to post-motion ones.
    pub transform: RigidTransform<f64>,
    /// Fiducial residual, mm.
    pub e_mc: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionRegistrationParams {
    /// Poisson-disc radius the clouds are thinned to before registration, mm.
    pub sample_radius: f64,
    /// Neighbourhood size for normal estimation.
    pub normal_k: usize,
    pub use_features: bool,
    /// Finish with point-to-plane ICP against the target's normals.
    pub point_to_plane: bool,
    /// Pair rejection distance of the point-to-plane stage, mm.
    pub plane_rejection: f64,
    pub roll_steps: usize,
    /// Largest rotation considered for the motion, degrees.
    pub max_rotation_deg: f64,
    pub max_iterations: usize,
    /// ICP stops once the RMS improves by less than this, mm.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for MotionRegistrationParams {
    fn default() -> Self {
        Self {
            sample_radius: 3.0,
            normal_k: 16,
            // centroid and principal-axis starts cover in-plane motion up to
            // the supported 80° yaw; features only add runtime here
            use_features: false,
            point_to_plane: true,
            plane_rejection: 10.0,
            roll_steps: 8,
            // scripted motions yaw at most 80°
            max_rotation_deg: 100.0,
            max_iterations: 200,
            tolerance: 1e-4,
            seed: 11,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionRegistration {
    pub transform: RigidTransform<f64>,
    /// Point-to-point ICP RMS per iteration, mm, in the direction it was run.
    pub mse_history: Vec<f64>,
    /// Point-to-plane RMS per refinement iteration, mm; empty when disabled.
    pub plane_history: Vec<f64>,
    pub source_points: usize,
    pub target_points: usize,
}

fn prepare(cloud: &PointCloud<f64>, p: &MotionRegistrationParams, thin: bool, normals: bool) -> Result<PointCloud<f64>, CompensateError> {
    let thin = if thin && p.sample_radius > 0.0 {
        poisson_disc_sample(&cloud.without_normals(), p.sample_radius, p.seed)
    } else {
        cloud.without_normals()
    };
    if thin.len() < MIN_CLOUD_POINTS || !normals {
        return Ok(thin);
    }
    // camera clouds are seen from above; any far-up viewpoint orients them
    let c = thin.centroid().unwrap_or_else(Vec3::zeros);
    Ok(with_estimated_normals(&thin, p.normal_k.min(thin.len()), &(c + Vec3::new(0.0, 0.0, 1000.0)))?)
}

/// Rigid motion taking `before` onto `after` (both in the base frame).
///
/// The smaller cloud is registered onto the larger one, so a partly
/// occluded view is matched into the complete one, and the result is
/// inverted when that was `after`.
pub fn register_motion(
    before: &PointCloud<f64>,
    after: &PointCloud<f64>,
    params: &MotionRegistrationParams,
) -> Result<MotionRegistration, CompensateError> {
    for (name, c) in [("before", before), ("after", after)] {
        if c.len() < MIN_CLOUD_POINTS {
            return Err(CompensateError::InvalidArgument(format!(
                "{name} cloud has {} points, need {MIN_CLOUD_POINTS}",
                c.len()
            )));
        }
    }
    // only the moving cloud is thinned: a dense target keeps point-to-point
    // residuals from being dominated by sampling offsets
    let swap = after.len() < before.len();
    let (src, dst) = if swap { (after, before) } else { (before, after) };
    let src = &prepare(src, params, true, params.use_features)?;
    let dst = &prepare(dst, params, false, params.use_features || params.point_to_plane)?;
    // the clouds share a frame, so centroid alignment is a safe first guess
    let shift = dst.centroid().unwrap() - src.centroid().unwrap();
    let init = RigidTransform::from_translation(shift);
    let ap = AlignParams {
        extra_starts: end_matched_starts(src, dst),
        use_features: params.use_features,
        roll_steps: params.roll_steps,
        max_rotation: Some(params.max_rotation_deg.to_radians()),
        icp: IcpParams {
            max_iterations: params.max_iterations,
            mse_delta_tolerance: params.tolerance,
            ..Default::default()
        },
        ..Default::default()
    };
    let al = align(src, dst, Some(&init), &ap)?;
    debug!(
        "motion registration: {:?} start, {} iterations, rms {:.3} mm",
        al.chosen,
        al.icp.iterations,
        al.icp.final_mse()
    );
    let (mut fitted, mut plane_history) = (al.transform, Vec::new());
    if params.point_to_plane && dst.has_normals() {
        let fine_params = IcpParams {
            rejection_distance: Some(params.plane_rejection),
            ..ap.icp.clone()
        };
        let fine = icp_refine_point_to_plane(src, dst, &fitted, &fine_params)?;
        debug!("point-to-plane: {} iterations, rms {:.3} mm", fine.iterations, fine.final_mse());
        fitted = fine.transform;
        plane_history = fine.mse_history;
    }
    let transform = if swap { fitted.inverse() } else { fitted };
    Ok(MotionRegistration {
        transform,
        mse_history: al.icp.mse_history,
        plane_history,
        source_points: src.len(),
        target_points: dst.len(),
    })
}

/// Starts that line up the principal axes (turning by less than 90°) and
/// then match either end of the clouds along that axis. When one view is
/// cropped at an end, its centroid slides along the limb and centroid
/// matching alone leaves ICP stuck on the near-cylindrical surface.
fn end_matched_starts(src: &PointCloud<f64>, dst: &PointCloud<f64>) -> Vec<RigidTransform<f64>> {
    let (Ok(a), Ok(b)) = (principal_axes(src), principal_axes(dst)) else {
        return Vec::new();
    };
    let (ua, mut ub) = (a.axes[0], b.axes[0]);
    if ua.dot(&ub) < 0.0 {
        ub = -ub;
    }
    let rot = RigidTransform::from_axis_angle(&ua.cross(&ub), ua.dot(&ub).clamp(-1.0, 1.0).acos(), Vec3::zeros());
    let span = |c: &PointCloud<f64>, r: &RigidTransform<f64>, u: &Vec3<f64>| {
        let mut t: Vec<f64> = c.points().iter().map(|p| r.apply(p).dot(u)).collect();
        t.sort_by(f64::total_cmp);
        let pick = |q: f64| t[((t.len() - 1) as f64 * q).round() as usize];
        (pick(0.01), pick(0.99))
    };
    let (lo_a, hi_a) = span(src, &rot, &ub);
    let (lo_b, hi_b) = span(dst, &RigidTransform::identity(), &ub);
    let ca = rot.apply(&src.centroid().unwrap());
    let cb = dst.centroid().unwrap();
    // across the axis the centroids agree; along it, one of the ends does
    let across = (cb - ca) - ub * (cb - ca).dot(&ub);
    [lo_b - lo_a, hi_b - hi_a]
        .iter()
        .map(|d| RigidTransform::from_translation(across + ub * *d).compose(&rot))
        .collect()
}

/// Residual of the table fiducial under the recovered motion, gated at
/// [`DEFAULT_EMC_GATE`].
pub fn evaluate_emc(marker_before: &Vec3<f64>, marker_after: &Vec3<f64>, t_mc: &RigidTransform<f64>) -> CompensationResult {
    evaluate_emc_with_gate(marker_before, marker_after, t_mc, DEFAULT_EMC_GATE)
}

pub fn evaluate_emc_with_gate(
    marker_before: &Vec3<f64>,
    marker_after: &Vec3<f64>,
    t_mc: &RigidTransform<f64>,
    gate: f64,
) -> CompensationResult {
    let e_mc = (marker_after - t_mc.apply(marker_before)).norm();
    CompensationResult {
        transform: *t_mc,
        e_mc,
        accepted: e_mc < gate,
    }
}

/// Remaining sweep from the break point on, moved with the object.
pub fn retarget_trajectory(
    traj: &Trajectory<f64>,
    bp: &BreakPoint,
    result: &CompensationResult,
    gate: f64,
) -> Result<Trajectory<f64>, CompensateError> {
    if !result.accepted {
        return Err(CompensateError::Rejected { e_mc: result.e_mc, gate });
    }
    if bp.waypoint >= traj.len() {
        return Err(CompensateError::InvalidArgument(format!(
            "break point {} beyond {} waypoints",
            bp.waypoint,
            traj.len()
        )));
    }
    Ok(traj.tail(bp.waypoint)?.transformed(&result.transform))
}

/// Moves the before-motion sweep with `t_mc`, then applies the one rigid
/// correction that lands its last frame exactly on the first after-motion
/// frame `t_af_fi`.
pub fn fine_adjust_poses(
    sweep: &SweepRecord,
    t_mc: &RigidTransform<f64>,
    t_be_la: &RigidTransform<f64>,
    t_af_fi: &RigidTransform<f64>,
) -> Result<SweepRecord, CompensateError> {
    if sweep.is_empty() {
        return Err(CompensateError::InvalidArgument("empty sweep".into()));
    }
    let delta = t_af_fi.compose(&t_mc.compose(t_be_la).inverse());
    let moved = delta.compose(t_mc);
    Ok(sweep.map_poses(|p| moved.compose(p)))
}

/// Shifts every before-motion frame in its image plane so that the vessel
/// centroid of the overlap frame coincides with the after-motion one.
///
/// `rotation` is the base-frame orientation of the overlap frame. A
/// missing centroid on either side skips the adjustment.
pub fn inplane_adjust(
    sweep: &SweepRecord,
    centroid_before: Option<(f64, f64)>,
    centroid_after: Option<(f64, f64)>,
    calib: &CalibrationSet,
    rotation: &Mat3<f64>,
) -> Result<SweepRecord, CompensateError> {
    let (Some(cb), Some(ca)) = (centroid_before, centroid_after) else {
        warn!("in-plane adjustment skipped: vessel not visible in an overlap frame");
        return Ok(sweep.clone());
    };
    let pb = pixel_to_probe(cb.0, cb.1, calib)?;
    let pa = pixel_to_probe(ca.0, ca.1, calib)?;
    let shift = rotation * (pa - pb);
    let t = RigidTransform::from_translation(shift);
    Ok(sweep.map_poses(|p| t.compose(p)))
}
