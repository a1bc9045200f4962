//! Rigid registration: feature-based coarse alignment and ICP refinement.

mod align;
mod coarse;
mod descriptors;
mod icp;

use thiserror::Error;

use crate::geom::GeomError;

pub use align::{align, AlignParams, Alignment, InitialGuess};
pub use coarse::{coarse_align, CoarseAlignment, CoarseParams, Correspondence};
pub use descriptors::{
    multiscale_descriptors, FeatureDescriptor, MultiscaleDescriptors, MultiscaleParams,
    BINS_PER_FEATURE, DEFAULT_SCALES, DESCRIPTOR_LEN,
};
pub use icp::{icp_refine, icp_refine_point_to_plane, IcpParams, RegistrationResult};

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cloud has no normals")]
    MissingNormals,
    #[error("coarse alignment failed: {0}")]
    CoarseAlignmentFailed(String),
    /// ICP lost every correspondence; `history` holds the RMS values reached so far.
    #[error("registration failed after {} iterations: {reason}", .history.len().saturating_sub(1))]
    Failed { reason: String, history: Vec<f64> },
    #[error(transparent)]
    Geom(#[from] GeomError),
}
