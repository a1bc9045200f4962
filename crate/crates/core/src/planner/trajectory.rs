use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};

use super::PlannerError;
use crate::geom::{KdTree, Mat3, PointCloud, RigidTransform, Vec3};
use crate::Scalar;

/// One probe placement: tip position and orientation in the base frame.
///
/// The rotation's columns are the probe axes `X_p` (out of the image
/// plane), `Y_p` (along the transducer) and `Z_p` (beam direction).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanWaypoint<T: Scalar> {
    pub pose: RigidTransform<T>,
}

impl<T: Scalar> ScanWaypoint<T> {
    pub fn new(pose: RigidTransform<T>) -> Self {
        Self { pose }
    }

    pub fn position(&self) -> Vec3<T> {
        *self.pose.translation()
    }

    pub fn orientation(&self) -> &Mat3<T> {
        self.pose.rotation()
    }

    pub fn axis(&self, i: usize) -> Vec3<T> {
        self.pose.rotation().column(i).into_owned()
    }
}

/// Ordered probe sweep with a nominal waypoint spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Scalar> {
    waypoints: Vec<ScanWaypoint<T>>,
    spacing: T,
}

impl<T: Scalar> Trajectory<T> {
    /// Checks there are at least two waypoints and that consecutive
    /// distances lie within `[0.2, 5]` times `spacing`.
    pub fn new(waypoints: Vec<ScanWaypoint<T>>, spacing: T) -> Result<Self, PlannerError> {
        if waypoints.len() < 2 {
            return Err(PlannerError::InvalidArgument(
                "trajectory needs at least 2 waypoints".into(),
            ));
        }
        if !(spacing > T::zero()) {
            return Err(PlannerError::InvalidArgument("spacing must be positive".into()));
        }
        for (i, w) in waypoints.windows(2).enumerate() {
            let d = (w[1].position() - w[0].position()).norm();
            if d < spacing * T::lit(0.2) || d > spacing * T::lit(5.0) {
                return Err(PlannerError::InvalidArgument(format!(
                    "waypoints {i}..{} are {:.3} mm apart, nominal {:.3}",
                    i + 1,
                    d.as_f64(),
                    spacing.as_f64()
                )));
            }
        }
        Ok(Self { waypoints, spacing })
    }

    pub fn waypoints(&self) -> &[ScanWaypoint<T>] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    /// Replaces waypoint orientations, keeping positions.
    pub fn with_rotation(&self, i: usize, rotation: Mat3<T>) -> Result<Self, PlannerError> {
        let mut w = self.waypoints.clone();
        let pose = RigidTransform::new(rotation, w[i].position())?;
        w[i] = ScanWaypoint::new(pose);
        Ok(Self {
            waypoints: w,
            spacing: self.spacing,
        })
    }

    /// Waypoints from `start` on, if at least two remain.
    pub fn tail(&self, start: usize) -> Result<Self, PlannerError> {
        if start >= self.waypoints.len() {
            return Err(PlannerError::InvalidArgument(format!(
                "tail start {start} beyond {} waypoints",
                self.waypoints.len()
            )));
        }
        let rest = self.waypoints[start..].to_vec();
        if rest.len() < 2 {
            // A single remaining waypoint is still a valid resume target.
            return Ok(Self {
                waypoints: rest,
                spacing: self.spacing,
            });
        }
        Self::new(rest, self.spacing)
    }

    /// Same sweep expressed after the rigid motion `t`.
    pub fn transformed(&self, t: &RigidTransform<T>) -> Self {
        Self {
            waypoints: self
                .waypoints
                .iter()
                .map(|w| ScanWaypoint::new(t.compose(&w.pose)))
                .collect(),
            spacing: self.spacing,
        }
    }

    /// `index,x,y,z,qw,qx,qy,qz` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,x,y,z,qw,qx,qy,qz\n");
        for (i, w) in self.waypoints.iter().enumerate() {
            let p = w.position();
            let q = w.pose.quaternion();
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{},{}",
                p.x.as_f64(),
                p.y.as_f64(),
                p.z.as_f64(),
                q.w.as_f64(),
                q.i.as_f64(),
                q.j.as_f64(),
                q.k.as_f64()
            );
        }
        s
    }

    /// Parses `to_csv` output; the nominal spacing becomes the median
    /// consecutive distance.
    pub fn from_csv(text: &str) -> Result<Self, PlannerError> {
        let mut waypoints = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("index") {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| PlannerError::Parse(format!("line {}: {e}", n + 1)))?;
            if v.len() != 8 {
                return Err(PlannerError::Parse(format!(
                    "line {}: expected 8 fields, got {}",
                    n + 1,
                    v.len()
                )));
            }
            if v[0] as usize != waypoints.len() {
                return Err(PlannerError::Parse(format!("line {}: index out of order", n + 1)));
            }
            let q = UnitQuaternion::from_quaternion(Quaternion::new(
                T::lit(v[4]),
                T::lit(v[5]),
                T::lit(v[6]),
                T::lit(v[7]),
            ));
            let pose = RigidTransform::from_quaternion(&q, Vec3::new(T::lit(v[1]), T::lit(v[2]), T::lit(v[3])));
            waypoints.push(ScanWaypoint::new(pose));
        }
        let mut d: Vec<T> = waypoints
            .windows(2)
            .map(|w| (w[1].position() - w[0].position()).norm())
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let spacing = d.get(d.len() / 2).copied().unwrap_or_else(T::one);
        Self::new(waypoints, spacing)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), PlannerError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self, PlannerError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Probe poses at the key points: `Z_p` against the nearest surface normal,
/// `Y_p = normalize(n × tangent)` and `X_p = Y_p × Z_p`.
///
/// Tangents are centered differences of the key points, one-sided at the
/// ends. `spacing` is the nominal key point spacing.
pub fn orient_waypoints<T: Scalar>(
    key_points: &[Vec3<T>],
    surface: &PointCloud<T>,
    spacing: T,
) -> Result<Trajectory<T>, PlannerError> {
    if key_points.len() < 2 {
        return Err(PlannerError::InvalidArgument(
            "orientation needs at least 2 key points".into(),
        ));
    }
    let normals = surface.normals().ok_or_else(|| {
        PlannerError::InvalidArgument("surface cloud has no normals".into())
    })?;
    let tree = KdTree::from_cloud(surface);
    let n = key_points.len();
    let mut waypoints = Vec::with_capacity(n);
    for i in 0..n {
        let tangent = match i {
            0 => key_points[1] - key_points[0],
            _ if i == n - 1 => key_points[n - 1] - key_points[n - 2],
            _ => key_points[i + 1] - key_points[i - 1],
        };
        let nearest = tree.nearest(&key_points[i]).expect("surface non-empty");
        let normal = normals[nearest.index];
        let y = normal.cross(&tangent);
        let yn = y.norm();
        if !(yn > tangent.norm() * T::lit(1e-6)) {
            return Err(PlannerError::Degenerate(format!(
                "surface normal parallel to path at waypoint {i}"
            )));
        }
        let y = y / yn;
        let z = -normal;
        let x = y.cross(&z);
        let pose = RigidTransform::new(Mat3::from_columns(&[x, y, z]), key_points[i])?;
        waypoints.push(ScanWaypoint::new(pose));
    }
    Trajectory::new(waypoints, spacing)
}

/// Moves a trajectory planned in template coordinates into the base frame
/// through the camera: `base_from_camera ∘ camera_from_template`.
pub fn transfer_trajectory<T: Scalar>(
    traj: &Trajectory<T>,
    camera_from_template: &RigidTransform<T>,
    base_from_camera: &RigidTransform<T>,
) -> Trajectory<T> {
    traj.transformed(&base_from_camera.compose(camera_from_template))
}
