use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::phantom::{Phantom, TriMesh};
use super::SimError;
use crate::geom::{PointCloud, Vec3};
use crate::imaging::Grid;
use crate::monitor::{CameraModel, DepthMap, Mask};

/// Axis-aligned pixel rectangle `[u0, u1) × [v0, v1)` hidden behind a
/// foreground object (probe or robot arm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub u0: usize,
    pub u1: usize,
    pub v0: usize,
    pub v1: usize,
    /// Optical depth of the occluding object, mm.
    pub depth: f64,
}

impl Occluder {
    /// Columns from the left (or right) edge of the silhouette onward until
    /// `fraction` of its pixels are hidden; spans all rows.
    pub fn covering(mask: &Mask, fraction: f64, from_left: bool, depth: f64) -> Option<Self> {
        let total = mask.data().iter().filter(|b| **b).count();
        if total == 0 || !(fraction > 0.0 && fraction < 1.0) {
            return None;
        }
        let col_count = |u: usize| (0..mask.height()).filter(|&v| mask.get(v, u)).count();
        let cols: Vec<usize> = if from_left {
            (0..mask.width()).collect()
        } else {
            (0..mask.width()).rev().collect()
        };
        let mut hidden = 0;
        for &u in &cols {
            hidden += col_count(u);
            if hidden as f64 >= fraction * total as f64 {
                let (u0, u1) = if from_left { (0, u + 1) } else { (u, mask.width()) };
                return Some(Self { u0, u1, v0: 0, v1: mask.height(), depth });
            }
        }
        None
    }

    /// Square blob centred on pixel `(u, v)`, grown until `fraction` of
    /// the silhouette is hidden; models the probe and robot arm over the
    /// scan site.
    pub fn around(mask: &Mask, center: (usize, usize), fraction: f64, depth: f64) -> Option<Self> {
        let total = mask.data().iter().filter(|b| **b).count();
        if total == 0 || !(fraction > 0.0 && fraction < 1.0) {
            return None;
        }
        let (cu, cv) = center;
        let limit = mask.width().max(mask.height());
        for half in 1..=limit {
            let occ = Self {
                u0: cu.saturating_sub(half),
                u1: (cu + half + 1).min(mask.width()),
                v0: cv.saturating_sub(half),
                v1: (cv + half + 1).min(mask.height()),
                depth,
            };
            let hidden = (occ.v0..occ.v1)
                .flat_map(|v| (occ.u0..occ.u1).map(move |u| (u, v)))
                .filter(|&(u, v)| mask.get(v, u))
                .count();
            if hidden as f64 >= fraction * total as f64 {
                return Some(occ);
            }
        }
        None
    }

    fn contains(&self, u: usize, v: usize) -> bool {
        (self.u0..self.u1).contains(&u) && (self.v0..self.v1).contains(&v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraRenderParams {
    /// Additive Gaussian depth noise, mm.
    pub depth_noise: f64,
    pub occluder: Option<Occluder>,
    pub seed: u64,
}

impl Default for CameraRenderParams {
    fn default() -> Self {
        Self {
            depth_noise: 2.0,
            occluder: None,
            seed: 0,
        }
    }
}

/// What the depth camera reports.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraView {
    /// Phantom silhouette (the segmentation).
    pub mask: Mask,
    /// Optical depth in mm, table included; 0 where nothing is hit.
    pub depth: DepthMap,
    /// Masked pixels back-projected to the base frame.
    pub cloud: PointCloud<f64>,
}

/// Noise-free z-buffer of a mesh: optical depth per pixel, `+∞` where the
/// mesh is not hit. Pixel centres are sampled with perspective-correct
/// depth interpolation.
pub fn rasterize_depth(mesh: &TriMesh, cam: &CameraModel) -> Grid<f64> {
    let mut zbuf = Grid::filled(cam.width, cam.height, f64::INFINITY);
    let inv = cam.pose.inverse();
    let proj: Vec<Option<(f64, f64, f64)>> = mesh
        .vertices
        .iter()
        .map(|v| cam.project_camera(&inv.apply(v)))
        .collect();
    for tri in &mesh.triangles {
        let (Some(a), Some(b), Some(c)) = (proj[tri[0]], proj[tri[1]], proj[tri[2]]) else {
            continue;
        };
        let area = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if area.abs() < 1e-12 {
            continue;
        }
        let umin = a.0.min(b.0).min(c.0).ceil().max(0.0);
        let umax = a.0.max(b.0).max(c.0).floor().min(cam.width as f64 - 1.0);
        let vmin = a.1.min(b.1).min(c.1).ceil().max(0.0);
        let vmax = a.1.max(b.1).max(c.1).floor().min(cam.height as f64 - 1.0);
        if umin > umax || vmin > vmax {
            continue;
        }
        for v in vmin as usize..=vmax as usize {
            for u in umin as usize..=umax as usize {
                let (x, y) = (u as f64, v as f64);
                let w0 = ((b.0 - x) * (c.1 - y) - (b.1 - y) * (c.0 - x)) / area;
                let w1 = ((c.0 - x) * (a.1 - y) - (c.1 - y) * (a.0 - x)) / area;
                let w2 = 1.0 - w0 - w1;
                let eps = -1e-9;
                if w0 < eps || w1 < eps || w2 < eps {
                    continue;
                }
                let z = 1.0 / (w0 / a.2 + w1 / b.2 + w2 / c.2);
                if z < zbuf.get(v, u) {
                    zbuf.set(v, u, z);
                }
            }
        }
    }
    zbuf
}

/// Indices of points whose projection is not hidden behind `zbuf` by more
/// than `tol` mm.
pub fn visible_points(points: &[Vec3<f64>], cam: &CameraModel, zbuf: &Grid<f64>, tol: f64) -> Vec<usize> {
    let inv = cam.pose.inverse();
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let Some((u, v, d)) = cam.project_camera(&inv.apply(p)) else {
                return false;
            };
            let (ui, vi) = (u.round(), v.round());
            if ui < 0.0 || vi < 0.0 || ui >= cam.width as f64 || vi >= cam.height as f64 {
                return false;
            }
            let z = zbuf.get(vi as usize, ui as usize);
            d <= z + tol || !z.is_finite()
        })
        .map(|(i, _)| i)
        .collect()
}

/// Depth camera frame of the phantom lying on the table plane `z = 0`.
pub fn render_camera_view(
    phantom: &Phantom,
    cam: &CameraModel,
    params: &CameraRenderParams,
) -> Result<CameraView, SimError> {
    cam.validate()?;
    let zbuf = rasterize_depth(&phantom.mesh_base(), cam);
    let mut mask = Grid::filled(cam.width, cam.height, false);
    let mut depth = Grid::filled(cam.width, cam.height, 0.0);
    let eye = cam.position();
    for v in 0..cam.height {
        for u in 0..cam.width {
            let z = zbuf.get(v, u);
            if z.is_finite() {
                mask.set(v, u, true);
                depth.set(v, u, z);
                continue;
            }
            // table: ray from the eye to z = 0, expressed as optical depth
            let dir = cam.pose.rotate(&cam.back_project(u as f64, v as f64, 1.0));
            if dir.z < 0.0 && eye.z > 0.0 {
                depth.set(v, u, -eye.z / dir.z);
            }
        }
    }
    if !mask.data().iter().any(|b| *b) {
        return Err(SimError::EmptyView);
    }
    if params.depth_noise > 0.0 {
        let noise = Normal::new(0.0, params.depth_noise)
            .map_err(|e| SimError::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for d in depth.data_mut() {
            let n = noise.sample(&mut rng);
            if *d > 0.0 {
                *d = (*d + n).max(1e-3);
            }
        }
    }
    if let Some(occ) = &params.occluder {
        for v in 0..cam.height {
            for u in 0..cam.width {
                if occ.contains(u, v) {
                    mask.set(v, u, false);
                    depth.set(v, u, occ.depth);
                }
            }
        }
    }
    let mut pts = Vec::new();
    for v in 0..cam.height {
        for u in 0..cam.width {
            if mask.get(v, u) {
                pts.push(cam.pixel_to_base(u as f64, v as f64, depth.get(v, u)));
            }
        }
    }
    if pts.is_empty() {
        return Err(SimError::EmptyView);
    }
    Ok(CameraView {
        mask,
        depth,
        cloud: PointCloud::new(pts),
    })
}

/// Depth map as 16-bit millimetres (rounded, saturating).
pub fn depth_to_u16(depth: &DepthMap) -> Grid<u16> {
    depth.map(|d| if d.is_finite() && d > 0.0 { d.round().min(65535.0) as u16 } else { 0 })
}

pub fn depth_from_u16(raw: &Grid<u16>) -> DepthMap {
    raw.map(f64::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitor::{dice_coefficient, mask_to_cloud, CloudParams};
    use crate::simworld::{gen_phantom, PhantomParams};

    fn noiseless() -> CameraRenderParams {
        CameraRenderParams { depth_noise: 0.0, ..Default::default() }
    }

    #[test]
    fn sphere_at_most_half_visible() {
        let cam = CameraModel::default();
        let mesh = TriMesh::sphere(Vec3::new(500.0, 0.0, 100.0), 60.0, 40, 80);
        let zbuf = rasterize_depth(&mesh, &cam);
        let vis = visible_points(&mesh.vertices, &cam, &zbuf, 3.0);
        let frac = vis.len() as f64 / mesh.vertices.len() as f64;
        assert!(frac <= 0.5 + 0.02 && frac > 0.3, "{frac}");
    }

    #[test]
    fn repeat_render_identical() {
        let ph = gen_phantom(1, &PhantomParams::default()).unwrap();
        let cam = CameraModel::default();
        let p = CameraRenderParams::default();
        let a = render_camera_view(&ph, &cam, &p).unwrap();
        let b = render_camera_view(&ph, &cam, &p).unwrap();
        assert_eq!(dice_coefficient(&a.mask, &b.mask).unwrap(), 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn visible_cloud_on_surface() {
        let ph = gen_phantom(1, &PhantomParams::default()).unwrap();
        let cam = CameraModel::default();
        let view = render_camera_view(&ph, &cam, &noiseless()).unwrap();
        // noise-free back-projections lie on the surface; the mesh is a
        // chordal approximation so allow a fraction of a millimetre
        let worst = view.cloud.points().iter().map(|p| ph.outside(p).abs()).fold(0.0, f64::max);
        assert!(worst < 0.5, "{worst}");
        assert!(view.cloud.len() > 1000);
        // with the table included, the plane is removed and the arm kept
        let c = mask_to_cloud(&view.mask, &view.depth, &cam, &CloudParams::default()).unwrap();
        assert!(c.points().iter().all(|p| p.z > 5.0));
        assert!(c.len() as f64 > 0.9 * view.cloud.len() as f64);
    }

    #[test]
    fn occluder_hides_fraction() {
        let ph = gen_phantom(1, &PhantomParams::default()).unwrap();
        let cam = CameraModel::default();
        let full = render_camera_view(&ph, &cam, &noiseless()).unwrap();
        let occ = Occluder::covering(&full.mask, 0.2, true, 400.0).unwrap();
        let part = render_camera_view(&ph, &cam, &CameraRenderParams { occluder: Some(occ), ..noiseless() }).unwrap();
        let f = part.cloud.len() as f64 / full.cloud.len() as f64;
        assert!((0.75..=0.8).contains(&f), "{f}");
        // the occluder sits far above the table and is cut by height
        let c = mask_to_cloud(&part.mask, &part.depth, &cam, &CloudParams { z_cut: 150.0, ..Default::default() }).unwrap();
        assert!(c.points().iter().all(|p| p.z < 150.0));
    }

    #[test]
    fn blob_occluder_hides_fraction_around_point() {
        let ph = gen_phantom(1, &PhantomParams::default()).unwrap();
        let cam = CameraModel::default();
        let full = render_camera_view(&ph, &cam, &noiseless()).unwrap();
        let (u, v, _) = cam.project(&ph.center()).unwrap();
        let occ = Occluder::around(&full.mask, (u as usize, v as usize), 0.2, 400.0).unwrap();
        assert!(occ.contains(u as usize, v as usize));
        let part = render_camera_view(&ph, &cam, &CameraRenderParams { occluder: Some(occ), ..noiseless() }).unwrap();
        let f = part.cloud.len() as f64 / full.cloud.len() as f64;
        assert!((0.75..=0.8).contains(&f), "{f}");
    }

    #[test]
    fn out_of_view_errors() {
        let mut ph = gen_phantom(1, &PhantomParams::default()).unwrap();
        ph.pose = crate::geom::RigidTransform::from_translation(Vec3::new(5000.0, 0.0, 0.0));
        assert!(matches!(render_camera_view(&ph, &CameraModel::default(), &noiseless()), Err(SimError::EmptyView)));
    }

    #[test]
    fn depth_u16_round_trip() {
        let d = Grid::from_fn(3, 2, |h, w| (h * 3 + w) as f64 * 100.4);
        let back = depth_from_u16(&depth_to_u16(&d));
        for (a, b) in d.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5);
        }
    }
}
