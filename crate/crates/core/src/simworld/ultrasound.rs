use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::phantom::Phantom;
use super::SimError;
use crate::confidence::UsImage;
use crate::geom::{RigidTransform, Vec3};
use crate::imaging::Grid;
use crate::monitor::Mask;
use crate::planner::CalibrationSet;

/// Constant-force spring stand-in for the compliant controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    /// Desired contact force, N.
    pub force: f64,
    /// Contact stiffness, N/m.
    pub stiffness: f64,
    /// How far along the probe axis to look for the surface, mm.
    pub search_range: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            force: 2.0,
            stiffness: 250.0,
            search_range: 50.0,
        }
    }
}

pub const STIFFNESS_RANGE: (f64, f64) = (125.0, 500.0);

impl ContactParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.stiffness >= STIFFNESS_RANGE.0 && self.stiffness <= STIFFNESS_RANGE.1) {
            return Err(SimError::InvalidArgument(format!(
                "stiffness {} N/m outside [{}, {}]",
                self.stiffness, STIFFNESS_RANGE.0, STIFFNESS_RANGE.1
            )));
        }
        if !(self.force >= 0.0 && self.search_range > 0.0) {
            return Err(SimError::InvalidArgument("force and search range must be non-negative".into()));
        }
        Ok(())
    }

    /// Spring penetration `F/k` in mm.
    pub fn penetration(&self) -> f64 {
        self.force / self.stiffness * 1000.0
    }
}

/// Signed outside-distance sampled along a phantom-frame line.
struct Line<'a> {
    phantom: &'a Phantom,
    origin: Vec3<f64>,
    dir: Vec3<f64>,
}

impl Line<'_> {
    fn at(&self, t: f64) -> f64 {
        self.phantom.local_outside(&(self.origin + self.dir * t))
    }

    fn bisect(&self, mut a: f64, mut b: f64) -> f64 {
        let fa_out = self.at(a) > 0.0;
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if (self.at(m) > 0.0) == fa_out {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// Boundary crossings in `[t0, t1]` with direction (`true` = entering).
    fn crossings(&self, t0: f64, t1: f64, step: f64) -> Vec<(f64, bool)> {
        let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
        let mut out = Vec::new();
        let mut prev = (t0, self.at(t0) > 0.0);
        for k in 1..=n {
            let t = t0 + (t1 - t0) * k as f64 / n as f64;
            let o = self.at(t) > 0.0;
            if o != prev.1 {
                out.push((self.bisect(prev.0, t), prev.1));
            }
            prev = (t, o);
        }
        out
    }
}

fn local_line<'a>(phantom: &'a Phantom, origin: &Vec3<f64>, dir: &Vec3<f64>) -> Line<'a> {
    let inv = phantom.pose.inverse();
    Line {
        phantom,
        origin: inv.apply(origin),
        dir: inv.rotate(dir),
    }
}

/// Slides the target pose along its `Z_p` until the tip sits `F/k` below the
/// first surface crossing; orientation is kept.
pub fn simulate_contact_step(
    target: &RigidTransform<f64>,
    phantom: &Phantom,
    params: &ContactParams,
) -> Result<RigidTransform<f64>, SimError> {
    params.validate()?;
    let z = target.rotation().column(2).into_owned();
    let line = local_line(phantom, target.translation(), &z);
    let r = params.search_range;
    let entry = line
        .crossings(-r, r, 0.25)
        .into_iter()
        .find(|(_, entering)| *entering)
        .ok_or(SimError::ContactLost)?;
    let tip = target.translation() + z * (entry.0 + params.penetration());
    Ok(RigidTransform::new(*target.rotation(), tip)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BmodeParams {
    /// Multiplicative speckle standard deviation.
    pub speckle: f64,
    /// Speckle correlation half-widths in pixels (axial, lateral); the
    /// point spread of a real probe spans several pixels.
    pub speckle_grain: [usize; 2],
    /// Lift at which an element loses contact entirely, mm.
    pub contact_tolerance: f64,
    pub tissue: f64,
    pub lumen: f64,
    pub rim: f64,
    /// Vessel wall thickness drawn bright, mm.
    pub rim_width: f64,
    /// Depth of the reverberation band under a lifted element, mm.
    pub reverberation_depth: f64,
    pub seed: u64,
}

impl Default for BmodeParams {
    fn default() -> Self {
        Self {
            speckle: 0.1,
            speckle_grain: [2, 4],
            contact_tolerance: 1.0,
            tissue: 0.45,
            lumen: 0.05,
            rim: 0.9,
            rim_width: 0.8,
            reverberation_depth: 2.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BmodeFrame {
    pub image: UsImage,
    /// Visible vessel lumen.
    pub vessel_mask: Mask,
    /// Per-column contact fraction in `[0, 1]`.
    pub contact: Vec<f64>,
}

/// How far beyond the imaging depth the probe tip may be from the surface.
const MAX_STANDOFF: f64 = 20.0;

/// Synthesises the B-mode frame seen by a probe at `probe_pose`.
///
/// Each column is a ray along `Z_p` from its transducer element. Tissue is
/// grey speckle, the vessel lumen dark with a bright wall. A column whose
/// element is lifted off the surface by `lift` keeps a contact fraction
/// `clamp(1 − lift/tolerance)`; the lost share is replaced by a bright
/// reverberation band followed by shadow.
pub fn render_bmode(
    phantom: &Phantom,
    probe_pose: &RigidTransform<f64>,
    calib: &CalibrationSet,
    params: &BmodeParams,
    frame: u64,
) -> Result<BmodeFrame, SimError> {
    calib.validate()?;
    if phantom.outside(probe_pose.translation()).abs() > MAX_STANDOFF {
        return Err(SimError::InvalidArgument(
            "probe more than 20 mm from the surface".into(),
        ));
    }
    let (wd, hd) = (calib.image_width, calib.image_height);
    let inv = phantom.pose.inverse();
    let z_base = probe_pose.rotation().column(2).into_owned();
    let depth_end = calib.depth_offset + calib.image_depth;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ frame.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let grain = speckle_field(wd, hd, params.speckle_grain, &mut rng);
    let vessel_r = phantom.params.vessel_radius;

    let mut image = Grid::filled(wd, hd, 0.0);
    let mut vessel_mask = Grid::filled(wd, hd, false);
    let mut contact = Vec::with_capacity(wd);
    for w in 0..wd {
        let element = probe_pose.apply(&calib.pixel_to_probe_unchecked(w as f64 + 0.5, 0.0));
        let line = local_line(phantom, &element, &z_base);
        let xs = line.crossings(-MAX_STANDOFF, depth_end + 1.0, 0.25);
        let start_inside = line.at(-MAX_STANDOFF) <= 0.0;
        // parity of the crossings passed so far
        let inside_at = |t: f64| {
            (xs.iter().filter(|(c, _)| *c <= t).count() % 2 == 1) != start_inside
        };
        let lift = if line.at(0.0) <= 0.0 {
            0.0
        } else {
            xs.iter().find(|(t, e)| *e && *t > 0.0).map_or(f64::INFINITY, |(t, _)| *t)
        };
        let c = (1.0 - lift / params.contact_tolerance).clamp(0.0, 1.0);
        contact.push(c);
        for h in 0..hd {
            let t = calib.depth_offset + calib.axial_scale() * (h as f64 + 0.5);
            let speckle = 1.0 + params.speckle * grain.get(h, w);
            let body = if inside_at(t) {
                let q = inv.apply(&(element + z_base * t));
                match phantom.vessel_distance(&q) {
                    Some(d) if d < vessel_r => {
                        if c >= 0.5 {
                            vessel_mask.set(h, w, true);
                        }
                        params.lumen
                    }
                    Some(d) if d < vessel_r + params.rim_width => params.rim,
                    _ => params.tissue,
                }
            } else {
                0.02
            };
            let shadow = if t - calib.depth_offset < params.reverberation_depth { 0.8 } else { 0.01 };
            let v = (c * body + (1.0 - c) * shadow) * speckle;
            image.set(h, w, v.clamp(0.0, 1.0));
        }
    }
    Ok(BmodeFrame {
        image,
        vessel_mask,
        contact,
    })
}

/// Unit-variance Gaussian field, box-correlated over `(2a+1) × (2l+1)`.
fn speckle_field(wd: usize, hd: usize, [a, l]: [usize; 2], rng: &mut ChaCha8Rng) -> Grid<f64> {
    let white = Grid::from_fn(wd, hd, |_, _| {
        let n: f64 = StandardNormal.sample(&mut *rng);
        n
    });
    let boxed = |g: &Grid<f64>, along_h: bool, r: usize| {
        Grid::from_fn(wd, hd, |h, w| {
            let (i, n) = if along_h { (h, hd) } else { (w, wd) };
            let (lo, hi) = (i.saturating_sub(r), (i + r).min(n - 1));
            let s: f64 = (lo..=hi).map(|k| if along_h { g.get(k, w) } else { g.get(h, k) }).sum();
            // rescale so edge windows keep unit variance too
            s / ((hi - lo + 1) as f64).sqrt()
        })
    };
    boxed(&boxed(&white, true, a), false, l)
}
