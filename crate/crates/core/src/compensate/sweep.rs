use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};

use super::CompensateError;
use crate::confidence::UsImage;
use crate::geom::{RigidTransform, Vec3};
use crate::imaging::{load_mask, load_pgm, save_mask, save_pgm8};
use crate::monitor::Mask;

/// Mean pixel position of the set pixels, at pixel centres (`index + 0.5`).
pub fn mask_centroid(mask: &Mask) -> Option<(f64, f64)> {
    let (mut sw, mut sh, mut n) = (0.0, 0.0, 0usize);
    for h in 0..mask.height() {
        for w in 0..mask.width() {
            if mask.get(h, w) {
                sw += w as f64;
                sh += h as f64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| (sw / n as f64 + 0.5, sh / n as f64 + 0.5))
}

/// One tracked ultrasound frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepFrame {
    /// Trajectory waypoint the frame was taken at.
    pub waypoint: usize,
    /// Probe pose in the base frame.
    pub pose: RigidTransform<f64>,
    pub image: UsImage,
    pub vessel_mask: Mask,
    /// Vessel centroid `(w, h)` in pixels; `None` when the mask is empty.
    pub centroid: Option<(f64, f64)>,
}

impl SweepFrame {
    pub fn new(waypoint: usize, pose: RigidTransform<f64>, image: UsImage, vessel_mask: Mask) -> Self {
        let centroid = mask_centroid(&vessel_mask);
        Self {
            waypoint,
            pose,
            image,
            vessel_mask,
            centroid,
        }
    }
}

/// Frames of one uninterrupted sweep, in acquisition order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepRecord {
    pub frames: Vec<SweepFrame>,
}

const HEADER: &str = "frame,waypoint,x,y,z,qw,qx,qy,qz,centroid_w,centroid_h";

impl SweepRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: SweepFrame) {
        self.frames.push(frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn first(&self) -> Option<&SweepFrame> {
        self.frames.first()
    }

    pub fn last(&self) -> Option<&SweepFrame> {
        self.frames.last()
    }

    /// Same frames with every pose replaced by `f(pose)`.
    pub fn map_poses(&self, f: impl Fn(&RigidTransform<f64>) -> RigidTransform<f64>) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|fr| SweepFrame {
                    pose: f(&fr.pose),
                    ..fr.clone()
                })
                .collect(),
        }
    }

    pub fn poses_csv(&self) -> String {
        let mut s = format!("{HEADER}\n");
        for (i, f) in self.frames.iter().enumerate() {
            let p = f.pose.translation();
            let q = f.pose.quaternion();
            let (cw, ch) = match f.centroid {
                Some((w, h)) => (w.to_string(), h.to_string()),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{},{},{},{cw},{ch}",
                f.waypoint, p.x, p.y, p.z, q.w, q.i, q.j, q.k
            );
        }
        s
    }

    /// Writes `poses.csv`, `frame_NNNN.pgm` (8-bit) and `mask_NNNN.pgm`
    /// into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<(), CompensateError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("poses.csv"), self.poses_csv())?;
        for (i, f) in self.frames.iter().enumerate() {
            save_pgm8(&dir.join(format!("frame_{i:04}.pgm")), &f.image)?;
            save_mask(&dir.join(format!("mask_{i:04}.pgm")), &f.vessel_mask)?;
        }
        Ok(())
    }

    /// Reads a record written by [`save`](Self::save). Images come back
    /// quantised to 8 bits; centroids are taken from the CSV.
    pub fn load(dir: &Path) -> Result<Self, CompensateError> {
        Self::load_with_poses(dir, "poses.csv")
    }

    /// Like [`load`](Self::load) with poses from another CSV in `dir`, such
    /// as a compensated copy written with [`poses_csv`](Self::poses_csv).
    pub fn load_with_poses(dir: &Path, poses: &str) -> Result<Self, CompensateError> {
        let text = std::fs::read_to_string(dir.join(poses))?;
        let mut frames = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("frame") {
                continue;
            }
            let bad = |m: String| CompensateError::Parse(format!("{poses} line {}: {m}", n + 1));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 11 {
                return Err(bad(format!("expected 11 fields, got {}", cells.len())));
            }
            let num = |i: usize| cells[i].trim().parse::<f64>().map_err(|e| bad(e.to_string()));
            let index: usize = cells[0].trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
            if index != frames.len() {
                return Err(bad("frame index out of order".into()));
            }
            let waypoint: usize = cells[1].trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
            let q = UnitQuaternion::from_quaternion(Quaternion::new(num(5)?, num(6)?, num(7)?, num(8)?));
            let pose = RigidTransform::from_quaternion(&q, Vec3::new(num(2)?, num(3)?, num(4)?));
            let centroid = if cells[9].trim().is_empty() {
                None
            } else {
                Some((num(9)?, num(10)?))
            };
            let image = load_pgm(&dir.join(format!("frame_{index:04}.pgm")))?;
            let vessel_mask = load_mask(&dir.join(format!("mask_{index:04}.pgm")))?;
            frames.push(SweepFrame {
                waypoint,
                pose,
                image,
                vessel_mask,
                centroid,
            });
        }
        Ok(Self { frames })
    }
}
