//! Object-motion monitoring from camera segmentation masks, and surface
//! point clouds from mask plus depth.

mod camera;

use std::collections::VecDeque;

use thiserror::Error;

use crate::imaging::Grid;

pub use camera::{fit_plane_ransac, mask_to_cloud, CameraModel, CloudParams, PlaneFit};

/// Binary segmentation at camera resolution.
pub type Mask = Grid<bool>;
/// Per-pixel depth along the optical axis in millimetres; `0` or
/// non-finite means no reading.
pub type DepthMap = Grid<f64>;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dice undefined: both masks are empty")]
    UndefinedDice,
    #[error("no valid depth inside the mask")]
    EmptyCloud,
}

fn check_shape<A: Copy, B: Copy>(a: &Grid<A>, b: &Grid<B>) -> Result<(), MonitorError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(MonitorError::InvalidArgument(format!(
            "grid {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )))
    }
}

/// `2|a∩b| / (|a| + |b|)`.
pub fn dice_coefficient(a: &Mask, b: &Mask) -> Result<f64, MonitorError> {
    check_shape(a, b)?;
    let (mut both, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        return Err(MonitorError::UndefinedDice);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// What each new mask is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    /// The last confirmed-stationary mask; catches slow drift.
    Reference,
    /// The mask `j` frames back.
    Sliding(usize),
}

impl Default for DetectionMode {
    fn default() -> Self {
        Self::Reference
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MotionEvent {
    pub frame: usize,
    /// Zero when the comparison was undefined.
    pub dice: f64,
    pub reference_frame: usize,
}

pub const DEFAULT_DICE_THRESHOLD: f64 = 0.95;

/// Stateful motion detector over a mask stream. One per scan session.
///
/// The first frame (and the first frame after [`reset`](Self::reset))
/// becomes the reference. Once an event fires the detector stays latched
/// and reports nothing further until it is reset.
#[derive(Clone, Debug)]
pub struct MotionDetector {
    threshold: f64,
    mode: DetectionMode,
    reference: Option<(usize, Mask)>,
    recent: VecDeque<(usize, Mask)>,
    next_frame: usize,
    latched: bool,
}

impl MotionDetector {
    pub fn new(threshold: f64, mode: DetectionMode) -> Result<Self, MonitorError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(MonitorError::InvalidArgument(format!(
                "dice threshold {threshold} outside (0, 1)"
            )));
        }
        if mode == DetectionMode::Sliding(0) {
            return Err(MonitorError::InvalidArgument("sliding window of 0 frames".into()));
        }
        Ok(Self {
            threshold,
            mode,
            reference: None,
            recent: VecDeque::new(),
            next_frame: 0,
            latched: false,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn mode(&self) -> DetectionMode {
        self.mode
    }

    pub fn is_latched(&self) -> bool {
        self.latched
    }

    /// Index the next observed mask will get.
    pub fn frame_index(&self) -> usize {
        self.next_frame
    }

    /// Feeds the next mask; returns an event on the first frame whose dice
    /// against the comparison mask drops below the threshold.
    pub fn observe(&mut self, mask: &Mask) -> Result<Option<MotionEvent>, MonitorError> {
        let frame = self.next_frame;
        if let Some((_, r)) = &self.reference {
            check_shape(r, mask)?;
        }
        self.next_frame += 1;
        if self.reference.is_none() {
            self.reference = Some((frame, mask.clone()));
            self.push_recent(frame, mask);
            return Ok(None);
        }
        let (ref_frame, cmp) = match self.mode {
            DetectionMode::Reference => self.reference.as_ref().map(|(i, m)| (*i, m)).unwrap(),
            DetectionMode::Sliding(j) => {
                // oldest retained frame until j frames have been seen
                let (i, m) = if self.recent.len() >= j {
                    &self.recent[self.recent.len() - j]
                } else {
                    &self.recent[0]
                };
                (*i, m)
            }
        };
        let dice = match dice_coefficient(cmp, mask) {
            Ok(d) => d,
            Err(MonitorError::UndefinedDice) => 0.0,
            Err(e) => return Err(e),
        };
        self.push_recent(frame, mask);
        if self.latched || dice >= self.threshold {
            return Ok(None);
        }
        self.latched = true;
        Ok(Some(MotionEvent {
            frame,
            dice,
            reference_frame: ref_frame,
        }))
    }

    fn push_recent(&mut self, frame: usize, mask: &Mask) {
        if let DetectionMode::Sliding(j) = self.mode {
            self.recent.push_back((frame, mask.clone()));
            while self.recent.len() > j {
                self.recent.pop_front();
            }
        }
    }

    /// Clears the latch and makes `mask` the new stationary reference, as
    /// after a completed compensation.
    pub fn reset(&mut self, mask: &Mask) {
        let frame = self.next_frame;
        self.next_frame += 1;
        self.reference = Some((frame, mask.clone()));
        self.recent.clear();
        self.push_recent(frame, mask);
        self.latched = false;
    }
}
