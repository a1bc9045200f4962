//! Scan trajectory planning: centerline extraction, surface projection,
//! probe orientation and the calibration frame chain.

mod calib;
mod centerline;
mod trajectory;

use thiserror::Error;

use crate::geom::GeomError;

pub use calib::{hand_eye_calibrate, pixel_to_base, pixel_to_probe, CalibrationSet, HandEyeFit};
pub use centerline::{extract_centerline, project_centerline_to_surface, DEFAULT_BIN_WIDTH, DEFAULT_K_ST};
pub use trajectory::{orient_waypoints, transfer_trajectory, ScanWaypoint, Trajectory};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geom(#[from] GeomError),
}
