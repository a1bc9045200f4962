use super::pca::{covariance, sorted_eigen};
use super::{GeomError, KdTree, PointCloud, Vec3};
use crate::Scalar;

/// Per-point normals; `None` marks a degenerate (collinear) neighborhood.
#[derive(Clone, Debug)]
pub struct NormalEstimate<T: Scalar> {
    pub normals: Vec<Option<Vec3<T>>>,
}

impl<T: Scalar> NormalEstimate<T> {
    pub fn degenerate_indices(&self) -> Vec<usize> {
        self.normals
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy of `cloud` carrying the estimated normals; degenerate points are
    /// dropped and their indices returned.
    pub fn apply(&self, cloud: &PointCloud<T>) -> (PointCloud<T>, Vec<usize>) {
        let mut pts = Vec::with_capacity(cloud.len());
        let mut ns = Vec::with_capacity(cloud.len());
        let mut dropped = Vec::new();
        for (i, n) in self.normals.iter().enumerate() {
            match n {
                Some(n) => {
                    pts.push(cloud.points()[i]);
                    ns.push(*n);
                }
                None => dropped.push(i),
            }
        }
        let out = PointCloud::with_normals(pts, ns).expect("unit normals by construction");
        (out, dropped)
    }
}

/// Normals from the smallest-eigenvalue eigenvector of each point's
/// `k`-neighborhood covariance (the point itself included), flipped so that
/// `normal · (viewpoint − point) ≥ 0`.
pub fn estimate_normals<T: Scalar>(
    cloud: &PointCloud<T>,
    k: usize,
    viewpoint: &Vec3<T>,
) -> Result<NormalEstimate<T>, GeomError> {
    if k < 3 || k > cloud.len() {
        return Err(GeomError::InvalidArgument(format!(
            "need 3 <= k <= |cloud|, got k = {k}, |cloud| = {}",
            cloud.len()
        )));
    }
    let tree = KdTree::from_cloud(cloud);
    let mut hood = Vec::with_capacity(k);
    let normals = cloud
        .points()
        .iter()
        .map(|p| {
            hood.clear();
            hood.extend(tree.knn(p, k).iter().map(|n| cloud.points()[n.index]));
            let (_, cov) = covariance(&hood);
            let (vals, axes) = sorted_eigen(&cov);
            if vals[0] <= T::zero() || vals[1] <= vals[0] * T::lit(T::RANK_TOL) {
                return None;
            }
            let mut n = axes[2];
            if n.dot(&(viewpoint - p)) < T::zero() {
                n = -n;
            }
            Some(n)
        })
        .collect();
    Ok(NormalEstimate { normals })
}

/// Convenience wrapper: estimate, attach and drop degenerate points.
pub fn with_estimated_normals<T: Scalar>(
    cloud: &PointCloud<T>,
    k: usize,
    viewpoint: &Vec3<T>,
) -> Result<PointCloud<T>, GeomError> {
    let est = estimate_normals(cloud, k, viewpoint)?;
    let (out, dropped) = est.apply(cloud);
    if !dropped.is_empty() {
        log::debug!("dropped {} points with degenerate neighborhoods", dropped.len());
    }
    Ok(out)
}
