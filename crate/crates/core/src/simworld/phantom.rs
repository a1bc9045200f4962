use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geom::{PointCloud, RigidTransform, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomParams {
    pub length: f64,
    /// Radius at the thick end.
    pub arm_radius: f64,
    /// Thin-end radius as a fraction of `arm_radius`.
    pub taper: f64,
    /// Extra half-width at the sides as a fraction of the radius; the
    /// cross-section is wider than tall, like a forearm. Top and bottom
    /// are unaffected.
    pub flattening: f64,
    pub vessel_radius: f64,
    /// Vessel centre depth below the nominal top surface.
    pub vessel_depth: f64,
    /// Lateral vessel sway amplitude.
    pub vessel_sway: f64,
    /// Peak radial surface perturbation.
    pub roughness: f64,
    /// Surface sample spacing along the axis and around it (approximate).
    pub sample_spacing: f64,
    /// Fiducial offset on the table, lateral to the phantom centre.
    pub fiducial_offset: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            length: 440.0,
            arm_radius: 30.0,
            taper: 0.8,
            flattening: 0.2,
            vessel_radius: 3.0,
            vessel_depth: 20.0,
            vessel_sway: 5.0,
            roughness: 1.5,
            sample_spacing: 2.0,
            fiducial_offset: 150.0,
        }
    }
}

/// One low-frequency surface mode: `a·cos(m·φ + p)·cos(2π·f·s + q)`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Mode {
    a: f64,
    m: f64,
    p: f64,
    f: f64,
    q: f64,
}

/// Triangle mesh, counter-clockwise seen from outside.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn transformed(&self, t: &RigidTransform<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// UV sphere, for tests and calibration targets.
    pub fn sphere(center: Vec3<f64>, radius: f64, rings: usize, segments: usize) -> Self {
        let mut vertices = vec![center + Vec3::z() * radius];
        for i in 1..rings {
            let th = PI * i as f64 / rings as f64;
            for j in 0..segments {
                let ph = TAU * j as f64 / segments as f64;
                vertices.push(center + Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()) * radius);
            }
        }
        vertices.push(center - Vec3::z() * radius);
        let bottom = vertices.len() - 1;
        let ring = |i: usize, j: usize| 1 + (i - 1) * segments + j % segments;
        let mut triangles = Vec::new();
        for j in 0..segments {
            triangles.push([0, ring(1, j), ring(1, j + 1)]);
            triangles.push([bottom, ring(rings - 1, j + 1), ring(rings - 1, j)]);
        }
        for i in 1..rings - 1 {
            for j in 0..segments {
                triangles.push([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
                triangles.push([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
            }
        }
        Self { vertices, triangles }
    }
}

/// Arm phantom in its own frame: axis along `x` centred at `x = 0`, table
/// plane `z = 0`, up `+z`. The cross-section at `x` is centred at height
/// `r0(x)` so the underside rests on the table; `φ = 0` points up.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub params: PhantomParams,
    /// Placement in the base frame.
    pub pose: RigidTransform<f64>,
    modes: Vec<Mode>,
    sway_phase: f64,
    surface: PointCloud<f64>,
    grid: (usize, usize),
}

/// Where a fresh phantom is placed in the base frame.
pub const DEFAULT_PLACEMENT: [f64; 3] = [500.0, 0.0, 0.0];

/// Axial margin between the vessel ends and the phantom caps.
const VESSEL_END_MARGIN: f64 = 10.0;

pub fn gen_phantom(seed: u64, params: &PhantomParams) -> Result<Phantom, SimError> {
    let p = params;
    let positive = [p.length, p.arm_radius, p.vessel_radius, p.vessel_depth, p.sample_spacing];
    if positive.iter().any(|v| !(*v > 0.0)) || !(p.roughness >= 0.0 && p.vessel_sway >= 0.0) {
        return Err(SimError::InvalidArgument("phantom dimensions must be positive".into()));
    }
    if !(0.0..=1.0).contains(&p.flattening) {
        return Err(SimError::InvalidArgument(format!("flattening {} outside [0, 1]", p.flattening)));
    }
    if !(p.taper > 0.0 && p.taper <= 1.0) {
        return Err(SimError::InvalidArgument(format!("taper {} outside (0, 1]", p.taper)));
    }
    if p.vessel_depth + p.vessel_radius >= p.arm_radius * p.taper {
        return Err(SimError::InvalidArgument(format!(
            "vessel at depth {} with radius {} does not fit inside the arm",
            p.vessel_depth, p.vessel_radius
        )));
    }
    if p.vessel_depth - p.vessel_radius <= p.roughness {
        return Err(SimError::InvalidArgument("vessel breaks through the surface".into()));
    }
    if 2.0 * VESSEL_END_MARGIN >= p.length {
        return Err(SimError::InvalidArgument("phantom too short".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes: Vec<Mode> = (0..6)
        .map(|_| Mode {
            a: rng.random_range(0.3..1.0),
            m: rng.random_range(0..4) as f64,
            p: rng.random_range(0.0..TAU),
            f: rng.random_range(1..4) as f64,
            q: rng.random_range(0.0..TAU),
        })
        .collect();
    let total: f64 = modes.iter().map(|m| m.a).sum();
    for m in &mut modes {
        m.a *= p.roughness / total;
    }
    let sway_phase = rng.random_range(0.0..TAU);

    let nx = (p.length / p.sample_spacing).ceil() as usize + 1;
    // even so that both the top (φ = 0) and bottom (φ = π) lines are sampled
    let nphi = (((TAU * p.arm_radius * (1.0 + p.flattening) / p.sample_spacing / 2.0).ceil() as usize) * 2).max(8);
    let mut ph = Phantom {
        params: p.clone(),
        pose: RigidTransform::from_translation(Vec3::from(DEFAULT_PLACEMENT)),
        modes,
        sway_phase,
        surface: PointCloud::new(Vec::new()),
        grid: (nx, nphi),
    };
    let mut pts = Vec::with_capacity(nx * nphi);
    let mut nrm = Vec::with_capacity(nx * nphi);
    for i in 0..nx {
        let x = ph.grid_x(i);
        for j in 0..nphi {
            let phi = TAU * j as f64 / nphi as f64;
            pts.push(ph.surface_point(x, phi));
            nrm.push(ph.surface_normal(x, phi));
        }
    }
    // flat caps, concentric rings
    for (x, sign) in [(-p.length / 2.0, -1.0), (p.length / 2.0, 1.0)] {
        let r = ph.r0(x);
        let rings = (r / p.sample_spacing).floor() as usize;
        for k in 0..rings {
            let f = k as f64 / rings as f64;
            let count = ((TAU * r * f * (1.0 + p.flattening) / p.sample_spacing).ceil() as usize).max(1);
            for j in 0..count {
                let a = TAU * j as f64 / count as f64;
                let rr = f * ph.radius(x, a);
                pts.push(Vec3::new(x, rr * a.sin(), r + rr * a.cos()));
                nrm.push(Vec3::x() * sign);
            }
        }
    }
    ph.surface = PointCloud::with_normals(pts, nrm).expect("matching lengths");
    Ok(ph)
}

impl Phantom {
    fn grid_x(&self, i: usize) -> f64 {
        -self.params.length / 2.0 + self.params.length * i as f64 / (self.grid.0 - 1) as f64
    }

    /// Axial fraction in `[0, 1]`, 0 at the thick end.
    fn s(&self, x: f64) -> f64 {
        x / self.params.length + 0.5
    }

    /// Nominal (smooth) radius at `x`; also the axis height.
    pub fn r0(&self, x: f64) -> f64 {
        self.params.arm_radius * (1.0 - (1.0 - self.params.taper) * self.s(x).clamp(0.0, 1.0))
    }

    /// Surface radius at `(x, φ)`.
    pub fn radius(&self, x: f64, phi: f64) -> f64 {
        let s = self.s(x);
        let r0 = self.r0(x);
        r0 * (1.0 + self.params.flattening * phi.sin().powi(2))
            + self
                .modes
                .iter()
                .map(|m| m.a * (m.m * phi + m.p).cos() * (TAU * m.f * s + m.q).cos())
                .sum::<f64>()
    }

    pub fn surface_point(&self, x: f64, phi: f64) -> Vec3<f64> {
        let r = self.radius(x, phi);
        Vec3::new(x, r * phi.sin(), self.r0(x) + r * phi.cos())
    }

    /// Outward unit normal of the tube surface by central differences.
    pub fn surface_normal(&self, x: f64, phi: f64) -> Vec3<f64> {
        let (hx, hp) = (1e-4, 1e-5);
        let dx = self.surface_point(x + hx, phi) - self.surface_point(x - hx, phi);
        let dp = self.surface_point(x, phi + hp) - self.surface_point(x, phi - hp);
        let n = dp.cross(&dx).normalize();
        let radial = Vec3::new(0.0, phi.sin(), phi.cos());
        if n.dot(&radial) < 0.0 {
            -n
        } else {
            n
        }
    }

    /// Signed distance proxy in the phantom frame: positive outside,
    /// negative inside, zero on the surface (radial for the tube, axial for
    /// the caps).
    pub fn local_outside(&self, p: &Vec3<f64>) -> f64 {
        let half = self.params.length / 2.0;
        let xc = p.x.clamp(-half, half);
        let (dy, dz) = (p.y, p.z - self.r0(xc));
        let rho = (dy * dy + dz * dz).sqrt();
        let radial = rho - self.radius(xc, dy.atan2(dz));
        radial.max(p.x.abs() - half)
    }

    /// Base-frame version of [`local_outside`](Self::local_outside).
    pub fn outside(&self, p: &Vec3<f64>) -> f64 {
        self.local_outside(&self.pose.inverse().apply(p))
    }

    /// Dense surface samples with normals, phantom frame.
    pub fn surface_local(&self) -> &PointCloud<f64> {
        &self.surface
    }

    pub fn surface_base(&self) -> PointCloud<f64> {
        self.surface.transformed(&self.pose)
    }

    /// Vessel span along the axis.
    pub fn vessel_range(&self) -> (f64, f64) {
        let half = self.params.length / 2.0 - VESSEL_END_MARGIN;
        (-half, half)
    }

    /// Vessel centre at axial position `x`, phantom frame.
    pub fn vessel_center(&self, x: f64) -> Vec3<f64> {
        let s = self.s(x);
        let y = self.params.vessel_sway * (TAU * 0.75 * s + self.sway_phase).sin();
        let r = self.r0(x);
        Vec3::new(x, y, r + (r * r - y * y).sqrt() - self.params.vessel_depth)
    }

    /// Distance from a phantom-frame point to the vessel axis, measured in
    /// the cross-section at its `x`; `None` beyond the vessel ends.
    pub fn vessel_distance(&self, p: &Vec3<f64>) -> Option<f64> {
        let (a, b) = self.vessel_range();
        if p.x < a || p.x > b {
            return None;
        }
        let c = self.vessel_center(p.x);
        Some(((p.y - c.y).powi(2) + (p.z - c.z).powi(2)).sqrt())
    }

    /// Ground-truth vessel centerline sampled every `step` mm, phantom frame.
    pub fn centerline_local(&self, step: f64) -> Vec<Vec3<f64>> {
        let (a, b) = self.vessel_range();
        let n = ((b - a) / step).ceil() as usize;
        (0..=n).map(|i| self.vessel_center(a + (b - a) * i as f64 / n as f64)).collect()
    }

    pub fn centerline_base(&self, step: f64) -> Vec<Vec3<f64>> {
        self.centerline_local(step).iter().map(|p| self.pose.apply(p)).collect()
    }

    /// Vessel wall samples (the segmented artery of a template), phantom frame.
    pub fn artery_local(&self, step: f64, per_ring: usize) -> PointCloud<f64> {
        let mut pts = Vec::new();
        let r = self.params.vessel_radius;
        for c in self.centerline_local(step) {
            for k in 0..per_ring {
                let a = TAU * k as f64 / per_ring as f64;
                pts.push(c + Vec3::new(0.0, a.sin(), a.cos()) * r);
            }
        }
        PointCloud::new(pts)
    }

    /// Centre of the phantom (on its axis, mid-length), base frame.
    pub fn center(&self) -> Vec3<f64> {
        self.pose.apply(&Vec3::new(0.0, 0.0, self.r0(0.0)))
    }

    /// Table-mounted fiducial, base frame.
    pub fn fiducial(&self) -> Vec3<f64> {
        self.pose.apply(&Vec3::new(0.0, self.params.fiducial_offset, 0.0))
    }

    /// Watertight surface mesh, phantom frame.
    pub fn mesh_local(&self) -> TriMesh {
        let (nx, nphi) = self.grid;
        let mut vertices: Vec<Vec3<f64>> = self.surface.points()[..nx * nphi].to_vec();
        let idx = |i: usize, j: usize| i * nphi + j % nphi;
        let mut triangles = Vec::with_capacity(2 * nx * nphi);
        for i in 0..nx - 1 {
            for j in 0..nphi {
                triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        for (i, x) in [(0, -self.params.length / 2.0), (nx - 1, self.params.length / 2.0)] {
            let c = vertices.len();
            vertices.push(Vec3::new(x, 0.0, self.r0(x)));
            for j in 0..nphi {
                if i == 0 {
                    triangles.push([c, idx(i, j), idx(i, j + 1)]);
                } else {
                    triangles.push([c, idx(i, j + 1), idx(i, j)]);
                }
            }
        }
        TriMesh { vertices, triangles }
    }

    pub fn mesh_base(&self) -> TriMesh {
        self.mesh_local().transformed(&self.pose)
    }
}

/// One scripted rigid motion of the phantom and table, in the table plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionStep {
    /// Waypoint index at which the motion happens.
    pub trigger: usize,
    /// In-plane translation, mm.
    pub translation: [f64; 2],
    /// Rotation about the vertical axis through the phantom centre, degrees.
    pub yaw_deg: f64,
}

/// Per-axis translation limit and rotation limit for scripted motions.
pub const MAX_TRANSLATION: f64 = 140.0;
pub const MAX_ROTATION_DEG: f64 = 80.0;

impl MotionStep {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.translation.iter().any(|t| !(t.abs() <= MAX_TRANSLATION)) || !(self.yaw_deg.abs() <= MAX_ROTATION_DEG) {
            return Err(SimError::InvalidArgument(format!(
                "motion {:?} / {} deg outside bounds",
                self.translation, self.yaw_deg
            )));
        }
        Ok(())
    }

    /// The motion as a base-frame transform, rotating about the vertical
    /// through `center`.
    pub fn transform_about(&self, center: &Vec3<f64>) -> RigidTransform<f64> {
        let rot = RigidTransform::from_axis_angle(&Vec3::z(), self.yaw_deg.to_radians(), Vec3::zeros());
        let c = Vec3::new(center.x, center.y, 0.0);
        let t = Vec3::new(self.translation[0], self.translation[1], 0.0);
        RigidTransform::from_translation(c + t)
            .compose(&rot)
            .compose(&RigidTransform::from_translation(-c))
    }

    /// Uniform in a `rect[0] × rect[1]` rectangle centred on the start and
    /// in `±max_yaw_deg`.
    pub fn random(rng: &mut impl Rng, trigger: usize, rect: [f64; 2], max_yaw_deg: f64) -> Self {
        Self {
            trigger,
            translation: [
                rng.random_range(-rect[0] / 2.0..=rect[0] / 2.0),
                rng.random_range(-rect[1] / 2.0..=rect[1] / 2.0),
            ],
            yaw_deg: rng.random_range(-max_yaw_deg..=max_yaw_deg),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionScript {
    #[serde(default)]
    pub steps: Vec<MotionStep>,
}

impl MotionScript {
    pub fn validate(&self) -> Result<(), SimError> {
        self.steps.iter().try_for_each(MotionStep::validate)
    }

    /// Steps triggered at waypoint `i`.
    pub fn at(&self, i: usize) -> impl Iterator<Item = &MotionStep> {
        self.steps.iter().filter(move |s| s.trigger == i)
    }
}

/// Moves phantom and table together; returns the base-frame transform, the
/// ground truth for registration and fiducial oracles.
pub fn apply_motion(phantom: &mut Phantom, step: &MotionStep) -> Result<RigidTransform<f64>, SimError> {
    step.validate()?;
    let t = step.transform_about(&phantom.center());
    phantom.pose = t.compose(&phantom.pose);
    Ok(t)
}

/// Rotation that takes the phantom frame's `+z` to `normal`, for tests.
#[cfg(test)]
pub(crate) fn frame_with_z(normal: &Vec3<f64>) -> crate::geom::Mat3<f64> {
    let z = normal.normalize();
    let x = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let y = z.cross(&x).normalize();
    let x = y.cross(&z);
    crate::geom::Mat3::from_columns(&[x, y, z])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_dense() {
        let a = gen_phantom(4, &PhantomParams::default()).unwrap();
        let b = gen_phantom(4, &PhantomParams::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.surface_local().len() >= 20_000);
        assert!(a.surface_local().has_normals());
        let c = gen_phantom(5, &PhantomParams::default()).unwrap();
        assert_ne!(a.surface_local(), c.surface_local());
    }

    #[test]
    fn smooth_cylinder_normals_are_radial() {
        let p = PhantomParams { roughness: 0.0, flattening: 0.0, taper: 1.0, ..Default::default() };
        let ph = gen_phantom(1, &p).unwrap();
        let (nx, nphi) = ph.grid;
        for (k, (pt, n)) in ph.surface_local().points().iter().zip(ph.surface_local().normals().unwrap()).enumerate().take(nx * nphi) {
            let radial = Vec3::new(0.0, pt.y, pt.z - 30.0).normalize();
            assert!(n.dot(&radial) > 1f64.to_radians().cos(), "point {k}");
            assert!((Vec3::new(0.0, pt.y, pt.z - 30.0).norm() - 30.0).abs() < 1e-9);
        }
    }

    #[test]
    fn vessel_inside_surface() {
        let ph = gen_phantom(9, &PhantomParams::default()).unwrap();
        let r = ph.params.vessel_radius;
        for c in ph.centerline_local(2.0) {
            // radial clearance in the cross-section
            for k in 0..72 {
                let a = TAU * k as f64 / 72.0;
                let q = c + Vec3::new(0.0, a.sin(), a.cos()) * r;
                assert!(ph.local_outside(&q) < 0.0);
            }
        }
        assert!(gen_phantom(1, &PhantomParams { vessel_depth: 26.0, ..Default::default() }).is_err());
        assert!(gen_phantom(1, &PhantomParams { vessel_depth: 3.5, ..Default::default() }).is_err());
    }

    #[test]
    fn rests_on_table_and_length() {
        let ph = gen_phantom(2, &PhantomParams { roughness: 0.0, ..Default::default() }).unwrap();
        let (lo, hi) = ph.surface_base().bounds().unwrap();
        assert!(lo.z.abs() < 1e-9);
        assert!((hi.x - lo.x - 440.0).abs() < 1e-9);
        assert!((hi.z - 60.0).abs() < 1e-6);
    }

    #[test]
    fn motion_moves_fiducial_rigidly() {
        let mut ph = gen_phantom(3, &PhantomParams::default()).unwrap();
        let f0 = ph.fiducial();
        let c0 = ph.center();
        let t = apply_motion(&mut ph, &MotionStep { trigger: 0, translation: [50.0, 60.0, ], yaw_deg: 0.0 }).unwrap();
        assert!((ph.fiducial() - f0 - Vec3::new(50.0, 60.0, 0.0)).norm() < 1e-12);
        assert!((t.apply(&f0) - ph.fiducial()).norm() < 1e-12);
        let before = ph.clone();
        apply_motion(&mut ph, &MotionStep { trigger: 0, translation: [0.0, 0.0], yaw_deg: 0.0 }).unwrap();
        assert_eq!(before, ph);
        // rotation pivots about the centre
        let c1 = ph.center();
        apply_motion(&mut ph, &MotionStep { trigger: 0, translation: [0.0, 0.0], yaw_deg: 40.0 }).unwrap();
        assert!((ph.center() - c1).norm() < 1e-9);
        assert!((c1 - c0 - Vec3::new(50.0, 60.0, 0.0)).norm() < 1e-9);
        assert!(MotionStep { trigger: 0, translation: [150.0, 0.0], yaw_deg: 0.0 }.validate().is_err());
        assert!(MotionStep { trigger: 0, translation: [0.0, 0.0], yaw_deg: 81.0 }.validate().is_err());
    }

    #[test]
    fn mesh_is_closed() {
        let ph = gen_phantom(3, &PhantomParams { sample_spacing: 8.0, ..Default::default() }).unwrap();
        let m = ph.mesh_local();
        let mut edges = std::collections::HashMap::new();
        for t in &m.triangles {
            for k in 0..3 {
                *edges.entry((t[k], t[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        // every directed edge has its reverse exactly once
        for (&(a, b), &n) in &edges {
            assert_eq!(n, 1);
            assert_eq!(edges.get(&(b, a)), Some(&1));
        }
        let s = TriMesh::sphere(Vec3::zeros(), 1.0, 8, 12);
        assert!(s.vertices.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn outside_sign() {
        let ph = gen_phantom(3, &PhantomParams::default()).unwrap();
        assert!(ph.local_outside(&Vec3::new(0.0, 0.0, ph.r0(0.0))) < 0.0);
        assert!(ph.local_outside(&Vec3::new(0.0, 0.0, 100.0)) > 0.0);
        assert!(ph.local_outside(&Vec3::new(300.0, 0.0, 20.0)) > 0.0);
        let p = ph.surface_point(12.0, 0.7);
        assert!(ph.local_outside(&p).abs() < 1e-9);
        let _ = frame_with_z(&Vec3::z());
    }
}
