use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PlannerError;
use crate::geom::{best_rigid_fit, GeomError, RigidTransform, Vec3};
use crate::Scalar;

/// Probe, image and camera calibration.
///
/// `flange_to_probe` is the probe tip pose in the robot flange frame and
/// `hand_eye` the camera pose in the robot base frame. Image pixels map to
/// the probe frame by an affine rule: columns run along `−Y_p`, rows along
/// `+Z_p` (depth), and the image plane is `x_p = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSet {
    /// Transducer aperture width in mm.
    pub probe_length: f64,
    /// Imaging depth in mm.
    pub image_depth: f64,
    pub image_width: usize,
    pub image_height: usize,
    /// Depth of the first image row below the probe tip, in mm.
    #[serde(default)]
    pub depth_offset: f64,
    #[serde(default)]
    pub flange_to_probe: RigidTransform<f64>,
    #[serde(default)]
    pub hand_eye: RigidTransform<f64>,
}

impl Default for CalibrationSet {
    fn default() -> Self {
        Self {
            probe_length: 37.5,
            image_depth: 55.0,
            image_width: 375,
            image_height: 550,
            depth_offset: 0.0,
            flange_to_probe: RigidTransform::from_translation(Vec3::new(0.0, 0.0, 150.0)),
            hand_eye: RigidTransform::identity(),
        }
    }
}

impl CalibrationSet {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.probe_length > 0.0 && self.image_depth > 0.0) {
            return Err(PlannerError::InvalidArgument(
                "probe length and image depth must be positive".into(),
            ));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(PlannerError::InvalidArgument(
                "image dimensions must be at least 1 px".into(),
            ));
        }
        if !self.depth_offset.is_finite() {
            return Err(PlannerError::InvalidArgument("depth offset must be finite".into()));
        }
        Ok(())
    }

    /// Lateral mm per pixel column (`L_p / W`).
    pub fn lateral_scale(&self) -> f64 {
        self.probe_length / self.image_width as f64
    }

    /// Axial mm per pixel row (`D / H`).
    pub fn axial_scale(&self) -> f64 {
        self.image_depth / self.image_height as f64
    }

    /// Probe-frame coordinates of a continuous pixel position, no range check.
    pub fn pixel_to_probe_unchecked(&self, w: f64, h: f64) -> Vec3<f64> {
        Vec3::new(
            0.0,
            -self.lateral_scale() * w + self.probe_length / 2.0,
            self.axial_scale() * h + self.depth_offset,
        )
    }

    /// Inverse of the pixel mapping for points in the image plane.
    pub fn probe_to_pixel(&self, p: &Vec3<f64>) -> (f64, f64) {
        (
            (self.probe_length / 2.0 - p.y) / self.lateral_scale(),
            (p.z - self.depth_offset) / self.axial_scale(),
        )
    }

    /// Robot flange pose that places the probe tip at `probe_pose`.
    pub fn flange_pose(&self, probe_pose: &RigidTransform<f64>) -> RigidTransform<f64> {
        probe_pose.compose(&self.flange_to_probe.inverse())
    }

    pub fn from_toml(text: &str) -> Result<Self, PlannerError> {
        let c: Self = toml::from_str(text).map_err(|e| PlannerError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration serializes")
    }

    pub fn load(path: &Path) -> Result<Self, PlannerError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), PlannerError> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }
}

/// Image pixel `(w, h)` in probe coordinates (mm).
pub fn pixel_to_probe(w: f64, h: f64, calib: &CalibrationSet) -> Result<Vec3<f64>, PlannerError> {
    let (wm, hm) = (calib.image_width as f64, calib.image_height as f64);
    if !(0.0..=wm).contains(&w) || !(0.0..=hm).contains(&h) {
        return Err(PlannerError::InvalidArgument(format!(
            "pixel ({w}, {h}) outside {wm}x{hm} image"
        )));
    }
    Ok(calib.pixel_to_probe_unchecked(w, h))
}

/// Image pixel `(w, h)` in base coordinates, given the probe pose in the base frame.
pub fn pixel_to_base(
    w: f64,
    h: f64,
    probe_pose: &RigidTransform<f64>,
    calib: &CalibrationSet,
) -> Result<Vec3<f64>, PlannerError> {
    Ok(probe_pose.apply(&pixel_to_probe(w, h, calib)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HandEyeFit<T: Scalar> {
    /// Camera pose in the base frame: maps camera points to base points.
    pub transform: RigidTransform<T>,
    /// RMS of `‖p_b − T·p_c‖` over the pairs (mm).
    pub residual_rms: T,
}

/// Camera-to-base transform from paired point observations `(p_camera, p_base)`.
pub fn hand_eye_calibrate<T: Scalar>(pairs: &[(Vec3<T>, Vec3<T>)]) -> Result<HandEyeFit<T>, PlannerError> {
    if pairs.len() < 3 {
        return Err(PlannerError::InvalidArgument(
            "hand-eye calibration needs at least 3 pairs".into(),
        ));
    }
    let (cam, base): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
    let transform = best_rigid_fit(&cam, &base).map_err(|e| match e {
        GeomError::Degenerate(m) => PlannerError::Degenerate(m),
        e => e.into(),
    })?;
    let sum = cam
        .iter()
        .zip(&base)
        .fold(T::zero(), |a, (c, b)| a + (b - transform.apply(c)).norm_squared());
    Ok(HandEyeFit {
        transform,
        residual_rms: (sum / T::from_usize(pairs.len()).unwrap()).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn pixel_mapping_corners() {
        let c = CalibrationSet::default();
        let p = pixel_to_probe(0.0, 0.0, &c).unwrap();
        assert!((p - Vec3::new(0.0, 18.75, 0.0)).norm() < 1e-12);
        let p = pixel_to_probe(187.5, 0.0, &c).unwrap();
        assert!(p.norm() < 1e-12);
        for w in [0.0, 100.0, 375.0] {
            assert!((pixel_to_probe(w, 550.0, &c).unwrap().z - 55.0).abs() < 1e-12);
        }
        assert!((c.lateral_scale() - 0.1).abs() < 1e-15);
        assert!((c.axial_scale() - 0.1).abs() < 1e-15);
        assert!(pixel_to_probe(-1.0, 0.0, &c).is_err());
        assert!(pixel_to_probe(0.0, 551.0, &c).is_err());
    }

    #[test]
    fn pixel_round_trip() {
        let c = CalibrationSet {
            depth_offset: 1.5,
            ..Default::default()
        };
        let (w, h) = c.probe_to_pixel(&pixel_to_probe(12.25, 300.5, &c).unwrap());
        assert!((w - 12.25).abs() < 1e-12 && (h - 300.5).abs() < 1e-12);
    }

    #[test]
    fn pixel_to_base_chain() {
        let c = CalibrationSet::default();
        let p = pixel_to_base(187.5, 0.0, &RigidTransform::identity(), &c).unwrap();
        assert!(p.norm() < 1e-12);
        let shift = RigidTransform::from_translation(Vec3::new(10.0, 0.0, 0.0));
        let a = pixel_to_base(40.0, 90.0, &RigidTransform::identity(), &c).unwrap();
        let b = pixel_to_base(40.0, 90.0, &shift, &c).unwrap();
        assert!((b - a - Vec3::new(10.0, 0.0, 0.0)).norm() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0);
            let pose = RigidTransform::from_axis_angle(
                &axis,
                rng.random_range(-3.0..3.0),
                Vec3::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(0.0..500.0)),
            );
            let (w, h) = (rng.random_range(0.0..375.0), rng.random_range(0.0..550.0));
            // Homogeneous image-to-probe matrix applied independently.
            let m = nalgebra::Matrix4::new(
                0.0, 0.0, 0.0, 0.0,
                -c.probe_length / c.image_width as f64, 0.0, 0.0, c.probe_length / 2.0,
                0.0, c.image_depth / c.image_height as f64, 0.0, c.depth_offset,
                0.0, 0.0, 0.0, 1.0,
            );
            let via = pose.to_homogeneous() * m * nalgebra::Vector4::new(w, h, 0.0, 1.0);
            let got = pixel_to_base(w, h, &pose, &c).unwrap();
            assert!((got - via.xyz()).norm() < 1e-9);
        }
    }

    #[test]
    fn hand_eye_exact_and_noisy() {
        let truth = RigidTransform::from_axis_angle(&Vec3::new(0.2, 1.0, 0.1), 2.5, Vec3::new(500.0, -20.0, 900.0));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cam: Vec<Vec3<f64>> = (0..20)
            .map(|_| Vec3::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0), rng.random_range(500.0..1000.0)))
            .collect();
        let pairs: Vec<_> = cam.iter().map(|c| (*c, truth.apply(c))).collect();
        let fit = hand_eye_calibrate(&pairs).unwrap();
        assert!(fit.transform.angle_to(&truth) < 1e-9);
        assert!((fit.transform.translation() - truth.translation()).norm() < 1e-9);
        assert!(fit.residual_rms < 1e-9);

        // 1 mm RMS displacement per point, split over three axes.
        let noise = Normal::new(0.0, 1.0 / 3f64.sqrt()).unwrap();
        let noisy: Vec<_> = pairs
            .iter()
            .map(|(c, b)| (*c, b + Vec3::from_fn(|_, _| noise.sample(&mut rng))))
            .collect();
        let fit = hand_eye_calibrate(&noisy).unwrap();
        assert!(fit.residual_rms <= 2.0, "rms {}", fit.residual_rms);
    }

    #[test]
    fn hand_eye_collinear_rejected() {
        let pairs: Vec<_> = (0..3)
            .map(|i| {
                let p = Vec3::new(i as f64, 2.0 * i as f64, 0.0);
                (p, p)
            })
            .collect();
        assert!(matches!(hand_eye_calibrate(&pairs), Err(PlannerError::Degenerate(_))));
    }

    #[test]
    fn toml_round_trip() {
        let c = CalibrationSet {
            depth_offset: 2.0,
            hand_eye: RigidTransform::from_axis_angle(&Vec3::z(), 0.5, Vec3::new(1.0, 2.0, 3.0)),
            ..Default::default()
        };
        let back = CalibrationSet::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back.image_width, 375);
        assert!(back.hand_eye.angle_to(&c.hand_eye) < 1e-12);
        assert!(CalibrationSet::from_toml("probe_length = -1.0\nimage_depth = 55.0\nimage_width = 375\nimage_height = 550\n").is_err());
    }
}
