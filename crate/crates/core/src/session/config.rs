use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::compensate::{CompoundMode, MotionRegistrationParams, DEFAULT_EMC_GATE};
use crate::confidence::ConfidenceParams;
use crate::monitor::{CameraModel, CloudParams, DEFAULT_DICE_THRESHOLD};
use crate::planner::{DEFAULT_BIN_WIDTH, DEFAULT_K_ST};
use crate::simworld::{BmodeParams, ContactParams, MotionScript, PhantomParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Dice below which a camera mask counts as motion.
    pub t_dice: f64,
    /// Confidence binarisation threshold.
    pub t_com: f64,
    /// Largest accepted fiducial error, mm.
    pub emc_gate: f64,
    /// Waypoints after the current one that share an orientation correction.
    pub n_up: usize,
    /// Centerline bin width and waypoint spacing, mm.
    pub d_in: f64,
    /// Surface neighbours averaged per trajectory point.
    pub k_st: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            t_dice: DEFAULT_DICE_THRESHOLD,
            t_com: 0.5,
            emc_gate: DEFAULT_EMC_GATE,
            n_up: 5,
            d_in: DEFAULT_BIN_WIDTH,
            k_st: DEFAULT_K_ST,
        }
    }
}

/// Simulated hand-eye calibration: marker positions seen by the camera and
/// touched by the robot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandEyeParams {
    /// Number of point pairs; 0 keeps the calibration file's transform.
    pub pairs: usize,
    /// RMS 3D error of each camera observation, mm.
    pub noise: f64,
}

impl Default for HandEyeParams {
    fn default() -> Self {
        Self { pairs: 20, noise: 1.0 }
    }
}

/// One motion drawn from the session seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMotion {
    pub trigger: usize,
    /// Translation rectangle (x, y), mm, centred on the start position.
    #[serde(default = "default_rect")]
    pub rect: [f64; 2],
    #[serde(default = "default_yaw")]
    pub max_yaw_deg: f64,
}

fn default_rect() -> [f64; 2] {
    [110.0, 140.0]
}

fn default_yaw() -> f64 {
    80.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub seed: u64,
    pub phantom: PhantomParams,
    /// Probe and image calibration; built-in defaults when absent.
    pub calibration_file: Option<PathBuf>,
    pub camera: CameraModel,
    /// Depth noise of the captures used for registration, mm.
    pub depth_noise: f64,
    /// Share of the arm silhouette hidden by the probe and robot in the
    /// post-motion capture; 0 disables the occluder.
    pub occluder_fraction: f64,
    pub cloud: CloudParams,
    /// Poisson-disc radius for the planning clouds, mm.
    pub template_spacing: f64,
    pub hand_eye: HandEyeParams,
    pub contact: ContactParams,
    pub bmode: BmodeParams,
    pub confidence: ConfidenceParams,
    pub thresholds: Thresholds,
    pub motion: MotionScript,
    pub random_motion: Option<RandomMotion>,
    pub registration: MotionRegistrationParams,
    pub compound_mode: CompoundMode,
    /// Apply the recovered motion to the earlier sweeps; `false` gives the
    /// uncompensated control.
    pub compensate: bool,
    /// Replace the recovered motion by the identity, to exercise the gate.
    pub sabotage_registration: bool,
    /// Scan only the first waypoints of the plan.
    pub max_waypoints: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            phantom: PhantomParams::default(),
            calibration_file: None,
            camera: CameraModel::default(),
            depth_noise: 2.0,
            occluder_fraction: 0.0,
            cloud: CloudParams {
                z_cut: 150.0,
                ..Default::default()
            },
            template_spacing: 4.0,
            hand_eye: HandEyeParams::default(),
            contact: ContactParams::default(),
            bmode: BmodeParams::default(),
            confidence: ConfidenceParams::default(),
            thresholds: Thresholds::default(),
            motion: MotionScript::default(),
            random_motion: None,
            registration: MotionRegistrationParams::default(),
            compound_mode: CompoundMode::Centroid,
            compensate: true,
            sabotage_registration: false,
            max_waypoints: None,
            output_dir: None,
        }
    }
}

impl SessionConfig {
    pub fn from_toml(text: &str) -> Result<Self, SessionError> {
        toml::from_str(text).map_err(|e| SessionError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    /// Reads a config file; a relative calibration path is taken relative
    /// to the config's directory.
    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let (Some(c), Some(dir)) = (&cfg.calibration_file, path.parent()) {
            if c.is_relative() {
                cfg.calibration_file = Some(dir.join(c));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let t = &self.thresholds;
        let bad = |m: String| Err(SessionError::Config(m));
        if !(t.t_dice > 0.0 && t.t_dice < 1.0) {
            return bad(format!("t_dice {} outside (0, 1)", t.t_dice));
        }
        if !(t.t_com > 0.0 && t.t_com < 1.0) {
            return bad(format!("t_com {} outside (0, 1)", t.t_com));
        }
        if !(t.emc_gate > 0.0) || !(t.d_in > 0.0) || t.k_st == 0 {
            return bad("emc_gate, d_in and k_st must be positive".into());
        }
        if !(self.depth_noise >= 0.0) || !(self.template_spacing > 0.0) {
            return bad("depth noise and template spacing must be non-negative".into());
        }
        if !(0.0..0.9).contains(&self.occluder_fraction) {
            return bad(format!("occluder fraction {} outside [0, 0.9)", self.occluder_fraction));
        }
        if !(self.hand_eye.noise >= 0.0) || (self.hand_eye.pairs > 0 && self.hand_eye.pairs < 3) {
            return bad("hand-eye needs 0 or at least 3 pairs and non-negative noise".into());
        }
        if let Some(c) = &self.calibration_file {
            if !c.is_file() {
                return bad(format!("calibration file {} not found", c.display()));
            }
        }
        self.motion.validate()?;
        if self.motion.steps.iter().any(|s| s.trigger == 0) || self.random_motion.as_ref().is_some_and(|r| r.trigger == 0) {
            return bad("motion cannot trigger before the first waypoint is imaged".into());
        }
        if let Some(r) = &self.random_motion {
            let [a, b] = r.rect;
            if !(a >= 0.0 && b >= 0.0 && a / 2.0 <= crate::simworld::MAX_TRANSLATION && b / 2.0 <= crate::simworld::MAX_TRANSLATION)
                || !(r.max_yaw_deg >= 0.0 && r.max_yaw_deg <= crate::simworld::MAX_ROTATION_DEG)
            {
                return bad("random motion bounds outside the supported range".into());
            }
        }
        self.contact.validate()?;
        self.camera.validate()?;
        Ok(())
    }
}
