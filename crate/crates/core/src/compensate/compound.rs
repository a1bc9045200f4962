use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CompensateError, SweepRecord};
use crate::geom::{PointCloud, Vec3};
use crate::planner::{pixel_to_base, CalibrationSet};

/// Which pixels of each vessel mask are lifted into 3D.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompoundMode {
    /// One point per frame at the mask centroid.
    #[default]
    Centroid,
    /// Mask pixels with an unset 4-neighbour.
    Contour,
    /// Every mask pixel.
    Full,
}

/// 3D vessel points in the base frame, tagged with the sweep they came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompoundVolume {
    pub points: Vec<Vec3<f64>>,
    pub sweep_ids: Vec<usize>,
}

impl CompoundVolume {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cloud(&self) -> PointCloud<f64> {
        PointCloud::new(self.points.clone())
    }

    /// Points from one sweep only.
    pub fn sweep(&self, id: usize) -> Vec<Vec3<f64>> {
        self.points
            .iter()
            .zip(&self.sweep_ids)
            .filter(|(_, s)| **s == id)
            .map(|(p, _)| *p)
            .collect()
    }

    /// ASCII PLY with an integer `sweep` property per vertex.
    pub fn to_ply(&self) -> String {
        let mut s = format!(
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nproperty int sweep\nend_header\n",
            self.points.len()
        );
        for (p, id) in self.points.iter().zip(&self.sweep_ids) {
            let _ = writeln!(s, "{} {} {} {id}", p.x, p.y, p.z);
        }
        s
    }

    pub fn from_ply(text: &str) -> Result<Self, CompensateError> {
        let bad = |m: &str| CompensateError::Parse(format!("volume PLY: {m}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("ply") {
            return Err(bad("missing magic"));
        }
        let mut count = None;
        for line in lines.by_ref() {
            let line = line.trim();
            if let Some(n) = line.strip_prefix("element vertex ") {
                count = Some(n.trim().parse::<usize>().map_err(|_| bad("vertex count"))?);
            }
            if line == "end_header" {
                break;
            }
        }
        let count = count.ok_or_else(|| bad("no vertex element"))?;
        let mut vol = Self::default();
        for line in lines.filter(|l| !l.trim().is_empty()).take(count) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(bad("expected x y z sweep"));
            }
            let v: Vec<f64> = f[..3]
                .iter()
                .map(|x| x.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("coordinate"))?;
            vol.points.push(Vec3::new(v[0], v[1], v[2]));
            vol.sweep_ids.push(f[3].parse().map_err(|_| bad("sweep id"))?);
        }
        if vol.points.len() != count {
            return Err(bad("truncated vertex list"));
        }
        Ok(vol)
    }

    pub fn save(&self, path: &Path) -> Result<(), CompensateError> {
        std::fs::write(path, self.to_ply())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CompensateError> {
        Self::from_ply(&std::fs::read_to_string(path)?)
    }
}

/// Maps the vessel pixels of every frame into the base frame through the
/// frame's probe pose.
pub fn compound_sweeps(
    sweeps: &[SweepRecord],
    calib: &CalibrationSet,
    mode: CompoundMode,
) -> Result<CompoundVolume, CompensateError> {
    let mut vol = CompoundVolume::default();
    for (id, sweep) in sweeps.iter().enumerate() {
        for f in &sweep.frames {
            let m = &f.vessel_mask;
            match mode {
                CompoundMode::Centroid => {
                    if let Some((w, h)) = f.centroid {
                        vol.points.push(pixel_to_base(w, h, &f.pose, calib)?);
                        vol.sweep_ids.push(id);
                    }
                }
                CompoundMode::Contour | CompoundMode::Full => {
                    for h in 0..m.height() {
                        for w in 0..m.width() {
                            if !m.get(h, w) {
                                continue;
                            }
                            if mode == CompoundMode::Contour {
                                let interior = h > 0
                                    && w > 0
                                    && h + 1 < m.height()
                                    && w + 1 < m.width()
                                    && m.get(h - 1, w)
                                    && m.get(h + 1, w)
                                    && m.get(h, w - 1)
                                    && m.get(h, w + 1);
                                if interior {
                                    continue;
                                }
                            }
                            let p = pixel_to_base(w as f64 + 0.5, h as f64 + 0.5, &f.pose, calib)?;
                            vol.points.push(p);
                            vol.sweep_ids.push(id);
                        }
                    }
                }
            }
        }
    }
    Ok(vol)
}

/// Distance between the base-frame vessel centroids of the last frame of
/// `before` and the first frame of `after`.
pub fn stitching_gap(before: &SweepRecord, after: &SweepRecord, calib: &CalibrationSet) -> Result<f64, CompensateError> {
    let (Some(b), Some(a)) = (before.last(), after.first()) else {
        return Err(CompensateError::UndefinedGap("a sweep is empty".into()));
    };
    let (Some(cb), Some(ca)) = (b.centroid, a.centroid) else {
        return Err(CompensateError::UndefinedGap("no vessel in a boundary frame".into()));
    };
    let pb = pixel_to_base(cb.0, cb.1, &b.pose, calib)?;
    let pa = pixel_to_base(ca.0, ca.1, &a.pose, calib)?;
    Ok((pa - pb).norm())
}
