//! Motion-aware robotic ultrasound scanning, simulated at desk scale.
//!
//! The crate plans a probe sweep over a limb surface from a registered
//! template, executes it against a simulated phantom, watches a camera
//! stream for rigid object motion, re-registers and resumes from the
//! breakpoint, corrects probe tilt from ultrasound confidence maps and
//! stitches the partial sweeps into one 3D vessel reconstruction.
//!
//! Geometry, registration and planning are generic over [`Scalar`]; the
//! aliases below fix them to `f64`, which is what the rest of the pipeline
//! uses.

pub mod compensate;
pub mod confidence;
pub mod geom;
pub mod imaging;
pub mod monitor;
pub mod planner;
pub mod registration;
pub mod session;
pub mod simworld;
mod scalar;

pub use scalar::Scalar;

pub type Vec3 = geom::Vec3<f64>;
pub type Mat3 = geom::Mat3<f64>;
pub type RigidTransform = geom::RigidTransform<f64>;
pub type PointCloud = geom::PointCloud<f64>;

pub type RigidTransform32 = geom::RigidTransform<f32>;
pub type PointCloud32 = geom::PointCloud<f32>;
