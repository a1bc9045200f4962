use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_shape, DepthMap, Mask, MonitorError};
use crate::geom::{principal_axes_of, Mat3, PointCloud, RigidTransform, Vec3};

/// Pinhole depth camera. Pixel `(u, v)` is column, row with integer values
/// at pixel centres; the optical frame has `z` forward, `x` along `u` and
/// `y` along `v`. `pose` maps camera points to base points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub pose: RigidTransform<f64>,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::looking_down(Vec3::new(500.0, 0.0, 1000.0), 320, 320, 400.0)
    }
}

impl CameraModel {
    /// Camera at `position` with its optical axis along base `−z`.
    pub fn looking_down(position: Vec3<f64>, width: usize, height: usize, focal: f64) -> Self {
        let r = Mat3::from_columns(&[Vec3::x(), -Vec3::y(), -Vec3::z()]);
        Self {
            fx: focal,
            fy: focal,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
            pose: RigidTransform::new(r, position).expect("axis permutation is a rotation"),
        }
    }

    pub fn validate(&self) -> Result<(), MonitorError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(MonitorError::InvalidArgument("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(MonitorError::InvalidArgument("empty camera resolution".into()));
        }
        Ok(())
    }

    pub fn position(&self) -> Vec3<f64> {
        *self.pose.translation()
    }

    /// Camera-frame point seen at pixel `(u, v)` with optical depth `depth`.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vec3<f64> {
        Vec3::new((u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth)
    }

    /// Pixel `(u, v)` and optical depth of a camera-frame point, if in front.
    pub fn project_camera(&self, p: &Vec3<f64>) -> Option<(f64, f64, f64)> {
        (p.z > 0.0).then(|| (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy, p.z))
    }

    /// Pixel and depth of a base-frame point.
    pub fn project(&self, p: &Vec3<f64>) -> Option<(f64, f64, f64)> {
        self.project_camera(&self.pose.inverse().apply(p))
    }

    /// Base-frame point behind pixel `(u, v)` at optical depth `depth`.
    pub fn pixel_to_base(&self, u: f64, v: f64, depth: f64) -> Vec3<f64> {
        self.pose.apply(&self.back_project(u, v, depth))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudParams {
    /// Plane inlier distance, mm.
    pub plane_dist_tol: f64,
    /// Points higher than this base-frame `z` are dropped.
    pub z_cut: f64,
    /// Pixels added around the mask's bounding box.
    pub bbox_margin: usize,
    pub plane_iterations: usize,
    /// Minimum inlier share for the plane to be removed.
    pub min_plane_fraction: f64,
    pub seed: u64,
}

impl Default for CloudParams {
    fn default() -> Self {
        Self {
            plane_dist_tol: 10.0,
            z_cut: f64::INFINITY,
            bbox_margin: 10,
            plane_iterations: 200,
            min_plane_fraction: 0.3,
            seed: 0x5eed,
        }
    }
}

/// Plane `n·p = d` with unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneFit {
    pub normal: Vec3<f64>,
    pub offset: f64,
    pub inlier_fraction: f64,
}

impl PlaneFit {
    pub fn signed_distance(&self, p: &Vec3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Dominant plane by seeded random consensus, refitted on its inliers.
///
/// With a `viewpoint`, candidates are scored by inliers minus points lying
/// more than `tol` behind the plane as seen from there: a depth camera
/// cannot see through a supporting surface, which rules out planes cutting
/// through the object. The returned normal then faces the viewpoint.
pub fn fit_plane_ransac(
    points: &[Vec3<f64>],
    tol: f64,
    iterations: usize,
    seed: u64,
    viewpoint: Option<&Vec3<f64>>,
) -> Option<PlaneFit> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let orient = |normal: Vec3<f64>, offset: f64| match viewpoint {
        Some(v) if normal.dot(v) - offset < 0.0 => (-normal, -offset),
        _ => (normal, offset),
    };
    let score = |normal: &Vec3<f64>, offset: f64| {
        let (mut inl, mut behind) = (0i64, 0i64);
        for p in points {
            let d = normal.dot(p) - offset;
            if d.abs() <= tol {
                inl += 1;
            } else if d < -tol {
                behind += 1;
            }
        }
        (inl, if viewpoint.is_some() { inl - behind } else { inl })
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(i64, Vec3<f64>, f64)> = None;
    for _ in 0..iterations {
        let (a, b, c) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
        let cross = (points[b] - points[a]).cross(&(points[c] - points[a]));
        let len = cross.norm();
        if len < 1e-9 {
            continue;
        }
        let (normal, offset) = orient(cross / len, (cross / len).dot(&points[a]));
        let (_, s) = score(&normal, offset);
        if best.as_ref().is_none_or(|b| s > b.0) {
            best = Some((s, normal, offset));
        }
    }
    let (_, mut normal, mut offset) = best?;
    let inliers: Vec<Vec3<f64>> = points
        .iter()
        .filter(|p| (normal.dot(p) - offset).abs() <= tol)
        .copied()
        .collect();
    if let Ok(axes) = principal_axes_of(&inliers) {
        let refit = axes.axes[2];
        let refit = if refit.dot(&normal) < 0.0 { -refit } else { refit };
        (normal, offset) = orient(refit, refit.dot(&axes.mean));
    }
    let (k, _) = score(&normal, offset);
    Some(PlaneFit {
        normal,
        offset,
        inlier_fraction: k as f64 / n as f64,
    })
}

/// Back-projects masked-region pixels with valid depth into the base frame,
/// then removes the dominant plane and everything behind it (as seen from
/// the camera) and finally points above `z_cut`.
///
/// All valid-depth pixels in the mask's bounding box (grown by
/// `bbox_margin`) are used so the supporting surface is present for the
/// plane fit.
pub fn mask_to_cloud(
    mask: &Mask,
    depth: &DepthMap,
    cam: &CameraModel,
    params: &CloudParams,
) -> Result<PointCloud<f64>, MonitorError> {
    check_shape(mask, depth)?;
    cam.validate()?;
    if mask.width() != cam.width || mask.height() != cam.height {
        return Err(MonitorError::InvalidArgument(
            "mask resolution differs from the camera".into(),
        ));
    }
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if mask.get(r, c) {
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
    }
    if r0 == usize::MAX {
        return Err(MonitorError::EmptyCloud);
    }
    let m = params.bbox_margin;
    let (r0, c0) = (r0.saturating_sub(m), c0.saturating_sub(m));
    let (r1, c1) = ((r1 + m).min(mask.height() - 1), (c1 + m).min(mask.width() - 1));

    let mut pts = Vec::new();
    for v in r0..=r1 {
        for u in c0..=c1 {
            let d = depth.get(v, u);
            if d.is_finite() && d > 0.0 {
                pts.push(cam.pixel_to_base(u as f64, v as f64, d));
            }
        }
    }
    if pts.is_empty() {
        return Err(MonitorError::EmptyCloud);
    }

    let eye = cam.position();
    match fit_plane_ransac(&pts, params.plane_dist_tol, params.plane_iterations, params.seed, Some(&eye)) {
        Some(plane) if plane.inlier_fraction >= params.min_plane_fraction => {
            pts.retain(|p| plane.signed_distance(p) > params.plane_dist_tol);
        }
        fit => warn!(
            "plane removal skipped: inlier fraction {:.2}",
            fit.map_or(0.0, |f| f.inlier_fraction)
        ),
    }
    pts.retain(|p| p.z <= params.z_cut);
    if pts.is_empty() {
        return Err(MonitorError::EmptyCloud);
    }
    Ok(PointCloud::new(pts))
}
