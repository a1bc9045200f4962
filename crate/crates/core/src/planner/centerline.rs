use super::PlannerError;
use crate::geom::{principal_axes, KdTree, PointCloud, Vec3};
use crate::Scalar;

/// Default centerline bin width in mm.
pub const DEFAULT_BIN_WIDTH: f64 = 5.0;
/// Default number of surface neighbors averaged per trajectory point.
pub const DEFAULT_K_ST: usize = 5;

/// Vessel centerline as bin means along the cloud's first principal axis.
///
/// Bins of width `d_in` tile the projected extent symmetrically about its
/// midpoint, so the result does not depend on the sign of the axis. Empty
/// bins are skipped.
pub fn extract_centerline<T: Scalar>(artery: &PointCloud<T>, d_in: T) -> Result<Vec<Vec3<T>>, PlannerError> {
    if artery.len() < 10 {
        return Err(PlannerError::InvalidArgument(
            "centerline extraction needs at least 10 points".into(),
        ));
    }
    if !(d_in > T::zero()) {
        return Err(PlannerError::InvalidArgument("bin width must be positive".into()));
    }
    let pa = principal_axes(artery)?;
    let s: Vec<T> = artery.points().iter().map(|p| pa.project_first(p)).collect();
    let lo = s.iter().copied().fold(s[0], |a, b| a.min(b));
    let hi = s.iter().copied().fold(s[0], |a, b| a.max(b));
    let bins = ((hi - lo) / d_in - T::lit(1e-9)).ceil().as_f64().max(1.0) as usize;
    let start = (lo + hi) / T::lit(2.0) - d_in * T::from_usize(bins).unwrap() / T::lit(2.0);

    let mut sums = vec![(Vec3::<T>::zeros(), 0usize); bins];
    for (p, si) in artery.points().iter().zip(&s) {
        let b = (((*si - start) / d_in).floor().as_f64().max(0.0) as usize).min(bins - 1);
        sums[b].0 += p;
        sums[b].1 += 1;
    }
    let centers: Vec<Vec3<T>> = sums
        .into_iter()
        .filter(|(_, n)| *n > 0)
        .map(|(sum, n)| sum / T::from_usize(n).unwrap())
        .collect();
    if centers.len() < 2 {
        return Err(PlannerError::Degenerate(
            "all artery points fall in one bin".into(),
        ));
    }
    Ok(centers)
}

/// Lifts each center to the surface's highest z and returns the mean of the
/// `k_st` surface points nearest to the lifted point.
pub fn project_centerline_to_surface<T: Scalar>(
    centers: &[Vec3<T>],
    surface: &PointCloud<T>,
    k_st: usize,
) -> Result<Vec<Vec3<T>>, PlannerError> {
    if surface.is_empty() {
        return Err(PlannerError::InvalidArgument("empty surface".into()));
    }
    if k_st == 0 || k_st > surface.len() {
        return Err(PlannerError::InvalidArgument(format!(
            "K_st = {k_st} outside 1..={}",
            surface.len()
        )));
    }
    let z_max = surface
        .points()
        .iter()
        .map(|p| p.z)
        .fold(surface.points()[0].z, |a, b| a.max(b));
    let tree = KdTree::from_cloud(surface);
    let k = T::from_usize(k_st).unwrap();
    Ok(centers
        .iter()
        .map(|c| {
            let lifted = Vec3::new(c.x, c.y, z_max);
            tree.knn(&lifted, k_st)
                .iter()
                .fold(Vec3::zeros(), |a, n| a + surface.points()[n.index])
                / k
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::RigidTransform;

    fn cylinder_x(len: f64, r: f64, n_axial: usize, n_around: usize) -> PointCloud<f64> {
        let mut pts = Vec::new();
        for i in 0..n_axial {
            let x = len * i as f64 / (n_axial - 1) as f64;
            for j in 0..n_around {
                let a = std::f64::consts::TAU * (j as f64 + 0.5 * (i % 2) as f64) / n_around as f64;
                pts.push(Vec3::new(x, r * a.cos(), r * a.sin()));
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn straight_cylinder_centers() {
        let c = cylinder_x(400.0, 3.0, 801, 12);
        let centers = extract_centerline(&c, 5.0).unwrap();
        assert!((centers.len() as i64 - 80).abs() <= 1, "{}", centers.len());
        for p in &centers {
            assert!((p.y * p.y + p.z * p.z).sqrt() < 0.5);
        }
    }

    #[test]
    fn curved_tube_centers() {
        // arc of radius 500 mm in the xy plane, tube radius 3 mm
        let big = 500.0;
        let mut pts = Vec::new();
        for i in 0..800 {
            let t = -0.4 + 0.8 * i as f64 / 799.0;
            let c = Vec3::new(big * t.sin(), big * (1.0 - t.cos()), 0.0);
            let tangent = Vec3::new(t.cos(), t.sin(), 0.0);
            let n1 = Vec3::new(-t.sin(), t.cos(), 0.0);
            let n2 = tangent.cross(&n1);
            for j in 0..16 {
                let a = std::f64::consts::TAU * j as f64 / 16.0;
                pts.push(c + (n1 * a.cos() + n2 * a.sin()) * 3.0);
            }
        }
        let centers = extract_centerline(&PointCloud::new(pts), 5.0).unwrap();
        for p in &centers[1..centers.len() - 1] {
            let dev = ((p - Vec3::new(0.0, big, 0.0)).norm() - big).abs();
            assert!(dev < 1.0, "deviation {dev}");
        }
    }

    #[test]
    fn single_bin_is_an_error() {
        let c = cylinder_x(4.0, 3.0, 5, 8);
        assert!(matches!(extract_centerline(&c, 50.0), Err(PlannerError::Degenerate(_))));
        assert!(extract_centerline(&PointCloud::new(vec![Vec3::zeros(); 5]), 1.0).is_err());
    }

    #[test]
    fn centerline_rigid_invariance() {
        let c = cylinder_x(203.0, 3.0, 401, 10);
        let t = RigidTransform::from_axis_angle(&Vec3::new(1.0, 2.0, -0.5), 2.2, Vec3::new(30.0, -4.0, 12.0));
        let a = extract_centerline(&c, 5.0).unwrap();
        let b = extract_centerline(&c.transformed(&t), 5.0).unwrap();
        assert_eq!(a.len(), b.len());
        let mapped: Vec<Vec3<f64>> = a.iter().map(|p| t.apply(p)).collect();
        let fwd = mapped.iter().zip(&b).all(|(p, q)| (p - q).norm() < 1e-6);
        let rev = mapped.iter().rev().zip(&b).all(|(p, q)| (p - q).norm() < 1e-6);
        assert!(fwd || rev);
    }

    #[test]
    fn flat_surface_projection() {
        let mut pts = Vec::new();
        for i in -30..=30 {
            for j in -30..=30 {
                pts.push(Vec3::new(i as f64, j as f64, 20.0));
            }
        }
        let surf = PointCloud::new(pts);
        let out = project_centerline_to_surface(&[Vec3::new(10.0, 5.0, -7.0)], &surf, 5).unwrap();
        assert!((out[0] - Vec3::new(10.0, 5.0, 20.0)).norm() <= 1.0);
        assert!(project_centerline_to_surface(&[Vec3::zeros()], &surf, 10_000).is_err());
    }

    #[test]
    fn projection_stays_on_cylinder_surface() {
        let surf = cylinder_x(300.0, 25.0, 151, 80);
        let spacing = surf.median_spacing();
        let centers: Vec<Vec3<f64>> = (0..50).map(|i| Vec3::new(5.0 + 5.0 * i as f64, 3.0, 10.0)).collect();
        let out = project_centerline_to_surface(&centers, &surf, 5).unwrap();
        let tree = KdTree::from_cloud(&surf);
        for p in &out {
            let d = tree.nearest(p).unwrap().dist_sq.sqrt();
            assert!(d <= 2.0 * spacing);
        }
    }
}
