use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::geom::{RigidTransform, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    /// A compensation failed the fiducial gate and the sweep was ended.
    Aborted,
    /// A stage raised an error.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanningReport {
    /// RMS residual of the hand-eye fit, mm.
    pub hand_eye_rms: f64,
    /// Camera cloud registered to the template.
    pub camera_points: usize,
    pub template_points: usize,
    /// Template registration RMS per ICP iteration, mm.
    pub registration_history: Vec<f64>,
    pub waypoints: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    /// Waypoint whose camera frame showed the motion.
    pub waypoint: usize,
    /// Camera frame index of the detection.
    pub detection_frame: usize,
    pub dice: f64,
    /// Waypoint the scan resumed from.
    pub break_waypoint: usize,
    pub source_points: usize,
    pub target_points: usize,
    pub mse_history: Vec<f64>,
    pub plane_history: Vec<f64>,
    pub transform: RigidTransform<f64>,
    /// Ground-truth fiducial positions around the motion.
    pub fiducial_before: Vec3<f64>,
    pub fiducial_after: Vec3<f64>,
    pub e_mc: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub seed: u64,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub planning: PlanningReport,
    /// B-mode frames kept, one per waypoint visit.
    pub frames: usize,
    /// Frames re-acquired after a confidence-based orientation correction.
    pub shadow_corrections: usize,
    pub sweeps: usize,
    #[serde(default)]
    pub events: Vec<EventReport>,
    /// Boundary gap after compensation, one per resumed sweep, mm.
    #[serde(default)]
    pub stitching_gaps: Vec<f64>,
    /// Same boundaries with the earlier sweeps left where they were imaged.
    #[serde(default)]
    pub uncompensated_gaps: Vec<f64>,
    pub volume_points: usize,
    /// RMS distance of the compounded vessel to the true centerline, mm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vessel_rms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vessel_rms_uncompensated: Option<f64>,
    /// Wall-clock seconds per stage. Not persisted, so saved reports stay
    /// reproducible.
    #[serde(skip)]
    pub runtimes: Vec<(String, f64)>,
}

impl SessionReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report is plain data")
    }

    pub fn from_toml(text: &str) -> Result<Self, SessionError> {
        toml::from_str(text).map_err(|e| SessionError::Config(format!("report: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Largest fiducial error over all motion events.
    pub fn max_e_mc(&self) -> Option<f64> {
        self.events.iter().map(|e| e.e_mc).reduce(f64::max)
    }

    /// `metric,value` rows, one number per row.
    pub fn metrics_csv(&self) -> String {
        let mut rows: Vec<(String, f64)> = vec![
            ("outcome_completed".into(), f64::from(u8::from(self.outcome == Outcome::Completed))),
            ("outcome_aborted".into(), f64::from(u8::from(self.outcome == Outcome::Aborted))),
            ("hand_eye_rms".into(), self.planning.hand_eye_rms),
            ("planning_iterations".into(), self.planning.registration_history.len().saturating_sub(1) as f64),
            (
                "planning_rms".into(),
                self.planning.registration_history.last().copied().unwrap_or(f64::NAN),
            ),
            ("waypoints".into(), self.planning.waypoints as f64),
            ("frames".into(), self.frames as f64),
            ("shadow_corrections".into(), self.shadow_corrections as f64),
            ("sweeps".into(), self.sweeps as f64),
            ("events".into(), self.events.len() as f64),
        ];
        for (i, e) in self.events.iter().enumerate() {
            rows.push((format!("event{i}_waypoint"), e.waypoint as f64));
            rows.push((format!("event{i}_detection_frame"), e.detection_frame as f64));
            rows.push((format!("event{i}_dice"), e.dice));
            rows.push((format!("event{i}_iterations"), e.mse_history.len().saturating_sub(1) as f64));
            rows.push((format!("event{i}_rms"), e.plane_history.last().or(e.mse_history.last()).copied().unwrap_or(f64::NAN)));
            rows.push((format!("event{i}_e_mc"), e.e_mc));
            rows.push((format!("event{i}_accepted"), f64::from(u8::from(e.accepted))));
        }
        for (i, g) in self.stitching_gaps.iter().enumerate() {
            rows.push((format!("stitching_gap{i}"), *g));
        }
        for (i, g) in self.uncompensated_gaps.iter().enumerate() {
            rows.push((format!("uncompensated_gap{i}"), *g));
        }
        rows.push(("volume_points".into(), self.volume_points as f64));
        if let Some(r) = self.vessel_rms {
            rows.push(("vessel_rms".into(), r));
        }
        if let Some(r) = self.vessel_rms_uncompensated {
            rows.push(("vessel_rms_uncompensated".into(), r));
        }
        let mut s = String::from("metric,value\n");
        for (k, v) in rows {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }
}
