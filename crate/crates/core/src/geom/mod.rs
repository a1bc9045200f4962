//! Core 3D types and geometric primitives.
//!
//! Everything here is generic over [`Scalar`](crate::Scalar) so the same
//! code serves single and double precision. Lengths are millimetres.

mod cloud;
mod fit;
mod kdtree;
mod normals;
mod pca;
pub mod ply;
mod poisson;
mod transform;

pub use cloud::{cloud_mse, PointCloud};
pub use fit::best_rigid_fit;
pub use kdtree::{knn_search, KdTree, Neighbor};
pub use normals::{estimate_normals, with_estimated_normals, NormalEstimate};
pub use pca::{principal_axes, principal_axes_of, PrincipalAxes};
pub use poisson::{poisson_disc_indices, poisson_disc_sample, poisson_disc_sample_count};
pub use transform::RigidTransform;

/// A point or direction in 3D.
pub type Vec3<T> = nalgebra::Vector3<T>;
/// A 3×3 matrix.
pub type Mat3<T> = nalgebra::Matrix3<T>;

#[derive(Debug, thiserror::Error)]
pub enum GeomError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("rotation is not orthonormal (deviation {0:.3e})")]
    NotRigid(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}
