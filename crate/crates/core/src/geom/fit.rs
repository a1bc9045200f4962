use super::{GeomError, Mat3, RigidTransform, Vec3};
use crate::Scalar;

/// Least-squares rigid transform `T` minimising `Σ ‖dst_i − T·src_i‖²`.
///
/// Closed-form SVD solution without scaling. Fails on fewer than three
/// pairs or when the source points are collinear.
pub fn best_rigid_fit<T: Scalar>(
    src: &[Vec3<T>],
    dst: &[Vec3<T>],
) -> Result<RigidTransform<T>, GeomError> {
    if src.len() != dst.len() {
        return Err(GeomError::InvalidArgument(format!(
            "{} source vs {} target points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(GeomError::InvalidArgument(
            "rigid fit needs at least 3 pairs".into(),
        ));
    }
    let n = T::from_usize(src.len()).unwrap();
    let cs = src.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let cd = dst.iter().fold(Vec3::zeros(), |a, p| a + p) / n;

    let mut h = Mat3::zeros();
    let mut spread = Mat3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = s - cs;
        h += a * (d - cd).transpose();
        spread += a * a.transpose();
    }
    let sv = spread.symmetric_eigenvalues();
    let mut ev = [sv[0], sv[1], sv[2]];
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if ev[0] <= T::zero() || ev[1] <= ev[0] * T::lit(T::RANK_TOL) {
        return Err(GeomError::Degenerate("collinear point configuration".into()));
    }

    let svd = h.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(GeomError::Degenerate("svd failed".into())),
    };
    let v = vt.transpose();
    let mut d = Mat3::identity();
    if (v * u.transpose()).determinant() < T::zero() {
        d[(2, 2)] = -T::one();
    }
    let r = v * d * u.transpose();
    let t = cd - r * cs;
    RigidTransform::from_approximate(r, t)
}
