//! Deterministic stand-ins for the physical world: an arm phantom on a
//! table, a depth camera, B-mode imaging with contact shadowing, a
//! constant-force contact surrogate and scripted rigid motions.

mod phantom;
mod render;
mod ultrasound;

use thiserror::Error;

pub use phantom::{
    apply_motion, gen_phantom, MotionScript, MotionStep, Phantom, PhantomParams, TriMesh, DEFAULT_PLACEMENT,
    MAX_ROTATION_DEG, MAX_TRANSLATION,
};
pub use render::{
    depth_from_u16, depth_to_u16, rasterize_depth, render_camera_view, visible_points, CameraRenderParams, CameraView,
    Occluder,
};
pub use ultrasound::{
    render_bmode, simulate_contact_step, BmodeFrame, BmodeParams, ContactParams, STIFFNESS_RANGE,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("phantom is outside the camera view")]
    EmptyView,
    #[error("no surface along the probe axis: contact lost")]
    ContactLost,
    #[error(transparent)]
    Geom(#[from] crate::geom::GeomError),
    #[error(transparent)]
    Monitor(#[from] crate::monitor::MonitorError),
    #[error(transparent)]
    Planner(#[from] crate::planner::PlannerError),
}
