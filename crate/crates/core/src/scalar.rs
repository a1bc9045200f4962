//! Scalar abstraction shared by the geometric core.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the geometry and registration code.
///
/// Implemented for `f32` and `f64`. The associated tolerances scale the
/// invariant checks to the precision of the type.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Send + Sync + 'static
{
    /// Allowed deviation of `RᵀR` from identity and of `det R` from one.
    const ORTHONORMAL_TOL: f64;
    /// Allowed deviation of a unit normal's length from one.
    const UNIT_TOL: f64;
    /// Relative eigenvalue below which a covariance counts as rank deficient.
    const RANK_TOL: f64;

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f64 {
    const ORTHONORMAL_TOL: f64 = 1e-9;
    const UNIT_TOL: f64 = 1e-6;
    const RANK_TOL: f64 = 1e-10;
}

impl Scalar for f32 {
    const ORTHONORMAL_TOL: f64 = 1e-4;
    const UNIT_TOL: f64 = 1e-4;
    const RANK_TOL: f64 = 1e-5;
}
