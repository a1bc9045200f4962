use super::{GeomError, Mat3, PointCloud, Vec3};
use crate::Scalar;

/// Principal axes of a point set, ordered by descending variance.
#[derive(Clone, Debug, PartialEq)]
pub struct PrincipalAxes<T: Scalar> {
    /// Orthonormal, right-handed.
    pub axes: [Vec3<T>; 3],
    /// Covariance eigenvalues in mm², descending and non-negative.
    pub eigenvalues: [T; 3],
    pub mean: Vec3<T>,
}

impl<T: Scalar> PrincipalAxes<T> {
    /// Coordinate of `p` along the first axis, relative to the mean.
    pub fn project_first(&self, p: &Vec3<T>) -> T {
        (p - self.mean).dot(&self.axes[0])
    }
}

pub fn principal_axes<T: Scalar>(cloud: &PointCloud<T>) -> Result<PrincipalAxes<T>, GeomError> {
    principal_axes_of(cloud.points())
}

pub fn principal_axes_of<T: Scalar>(points: &[Vec3<T>]) -> Result<PrincipalAxes<T>, GeomError> {
    if points.len() < 2 {
        return Err(GeomError::InvalidArgument(
            "principal axes need at least 2 points".into(),
        ));
    }
    let (mean, cov) = covariance(points);
    if cov.iter().all(|v| *v == T::zero()) {
        return Err(GeomError::Degenerate("all points identical".into()));
    }
    let (eigenvalues, axes) = sorted_eigen(&cov);
    Ok(PrincipalAxes {
        axes,
        eigenvalues,
        mean,
    })
}

/// Mean and population covariance.
pub(crate) fn covariance<T: Scalar>(points: &[Vec3<T>]) -> (Vec3<T>, Mat3<T>) {
    let n = T::from_usize(points.len()).unwrap();
    let mean = points.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let mut cov = Mat3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    (mean, cov / n)
}

/// Eigen-decomposition of a symmetric 3×3 matrix, descending.
///
/// Eigenvalues are clamped at zero. The first two axes are sign-normalised
/// so their largest-magnitude component is positive; the third completes a
/// right-handed frame.
pub(crate) fn sorted_eigen<T: Scalar>(cov: &Mat3<T>) -> ([T; 3], [Vec3<T>; 3]) {
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let vals = order.map(|i| eig.eigenvalues[i].max(T::zero()));
    let mut axes = order.map(|i| eig.eigenvectors.column(i).into_owned().normalize());
    for axis in axes.iter_mut().take(2) {
        let mut k = 0;
        for d in 1..3 {
            if axis[d].abs() > axis[k].abs() {
                k = d;
            }
        }
        if axis[k] < T::zero() {
            *axis = -*axis;
        }
    }
    // Re-orthogonalise against round-off before completing the frame.
    let a0 = axes[0];
    let a1 = (axes[1] - a0 * a0.dot(&axes[1])).normalize();
    axes[1] = a1;
    axes[2] = a0.cross(&a1);
    (vals, axes)
}
