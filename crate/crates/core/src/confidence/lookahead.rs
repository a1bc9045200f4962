use log::warn;

use super::ConfidenceError;
use crate::geom::{Mat3, RigidTransform, Vec3};
use crate::planner::{ScanWaypoint, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct LookaheadUpdate {
    pub trajectory: Trajectory<f64>,
    /// Weight applied to waypoints `i_c + 1 ..= i_c + applied`.
    pub weights: Vec<f64>,
    pub applied: usize,
}

/// Decaying weights `η_i = d²_{N+1−i} / Σ_j d²_j` from arc distances
/// `d_1 < … < d_N` measured from the current waypoint.
pub fn lookahead_weights(arc: &[f64]) -> Result<Vec<f64>, ConfidenceError> {
    if arc.iter().any(|d| !(*d > 0.0)) {
        return Err(ConfidenceError::InvalidArgument(
            "arc distances must be positive".into(),
        ));
    }
    let total: f64 = arc.iter().map(|d| d * d).sum();
    let n = arc.len();
    Ok((1..=n).map(|i| arc[n - i] * arc[n - i] / total).collect())
}

fn rot_x(deg: f64) -> Mat3<f64> {
    *RigidTransform::from_axis_angle(&Vec3::x(), deg.to_radians(), Vec3::zeros()).rotation()
}

/// Rotates the current waypoint by `−θ_c` about its own `X_p` and the next
/// `n_up` waypoints by the decayed share `−η_i·θ_c`. Positions are kept.
///
/// `n_up` is clamped to the waypoints that remain, with a warning.
pub fn update_lookahead(
    traj: &Trajectory<f64>,
    i_c: usize,
    theta_deg: f64,
    n_up: usize,
) -> Result<LookaheadUpdate, ConfidenceError> {
    if i_c >= traj.len() {
        return Err(ConfidenceError::InvalidArgument(format!(
            "waypoint {i_c} beyond trajectory of {}",
            traj.len()
        )));
    }
    let remaining = traj.len() - 1 - i_c;
    let applied = if n_up > remaining {
        warn!("lookahead of {n_up} clamped to {remaining} remaining waypoints");
        remaining
    } else {
        n_up
    };
    let wps = traj.waypoints();
    let mut arc = Vec::with_capacity(applied);
    let mut acc = 0.0;
    for j in 1..=applied {
        acc += (wps[i_c + j].position() - wps[i_c + j - 1].position()).norm();
        arc.push(acc);
    }
    let weights = lookahead_weights(&arc)?;

    let rotate = |w: &ScanWaypoint<f64>, deg: f64| -> ScanWaypoint<f64> {
        let r = w.orientation() * rot_x(-deg);
        ScanWaypoint::new(RigidTransform::from_approximate(r, w.position()).expect("product of rotations"))
    };
    let mut out: Vec<ScanWaypoint<f64>> = wps.to_vec();
    out[i_c] = rotate(&wps[i_c], theta_deg);
    for (k, eta) in weights.iter().enumerate() {
        let i = i_c + 1 + k;
        out[i] = rotate(&wps[i], eta * theta_deg);
    }
    let trajectory = Trajectory::new(out, traj.spacing())
        .map_err(|e| ConfidenceError::InvalidArgument(e.to_string()))?;
    Ok(LookaheadUpdate {
        trajectory,
        weights,
        applied,
    })
}
