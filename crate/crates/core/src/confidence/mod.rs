//! Ultrasound confidence maps and the in-plane probe correction derived
//! from them.

mod lookahead;
mod map;

use thiserror::Error;

use crate::imaging::Grid;
use crate::planner::CalibrationSet;

pub use lookahead::{lookahead_weights, update_lookahead, LookaheadUpdate};

/// B-mode intensities in `[0, 1]`.
pub type UsImage = Grid<f64>;
/// Per-pixel confidence in `[0, 1]`; first row 1, last row 0.
pub type ConfidenceMap = Grid<f64>;
pub type BinaryMap = Grid<bool>;

#[derive(Debug, Error)]
pub enum ConfidenceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("linear solve failed ({detail}), residual {residual:.3e}")]
    Numerical { residual: f64, detail: String },
    #[error("binary map has no set pixel")]
    NoSignal,
    #[error("barycenter on the first row: angle undefined")]
    UndefinedAngle,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ConfidenceParams {
    /// Attenuation coefficient over normalised depth.
    pub alpha: f64,
    /// Edge weight sharpness.
    pub beta: f64,
    /// Horizontal edge penalty.
    pub gamma: f64,
    /// The walk is solved on an image shrunk by this factor per axis and
    /// upsampled bilinearly; 1 solves at full resolution.
    pub downsample: usize,
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 90.0,
            gamma: 0.05,
            downsample: 4,
        }
    }
}

/// Random-walk confidence: the probability that a walker leaving each pixel
/// reaches the transducer row before the bottom row.
///
/// Edge weights are `exp(−β·d) + 1e-5` with `d` the min-max normalised
/// difference of depth-attenuated intensities, plus `γ` on horizontal and
/// `√2·γ` on diagonal edges.
pub fn confidence_map(img: &UsImage, params: &ConfidenceParams) -> Result<ConfidenceMap, ConfidenceError> {
    if !(params.alpha > 0.0 && params.beta > 0.0 && params.gamma > 0.0) || params.downsample == 0 {
        return Err(ConfidenceError::InvalidArgument(
            "alpha, beta, gamma and downsample must be positive".into(),
        ));
    }
    if img.is_empty() || img.height() < 2 {
        return Err(ConfidenceError::InvalidArgument(
            "image needs at least 2 rows".into(),
        ));
    }
    if img.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(ConfidenceError::InvalidArgument(
            "intensities must lie in [0, 1]".into(),
        ));
    }
    if params.downsample == 1 {
        return map::solve_full(img, params, 1.0, None);
    }
    let small = map::downsample(img, params.downsample);
    let step = (img.height() as f64 / small.height() as f64 + img.width() as f64 / small.width() as f64) / 2.0;
    let solved = map::solve_full(&small, params, step, Some(map::cost_range(img, params)))?;
    let mut out = map::upsample(&solved, img.width(), img.height());
    let last = img.height() - 1;
    for w in 0..img.width() {
        out.set(0, w, 1.0);
        out.set(last, w, 0.0);
    }
    Ok(out)
}

pub fn binarize_map(map: &ConfidenceMap, t_com: f64) -> Result<BinaryMap, ConfidenceError> {
    if !(t_com > 0.0 && t_com < 1.0) {
        return Err(ConfidenceError::InvalidArgument(format!(
            "threshold {t_com} outside (0, 1)"
        )));
    }
    Ok(map.map(|v| v >= t_com))
}

/// Mean `(h, w)` pixel index of the set pixels.
pub fn weighted_barycenter(binary: &BinaryMap) -> Result<(f64, f64), ConfidenceError> {
    let (mut sh, mut sw, mut n) = (0.0, 0.0, 0usize);
    for h in 0..binary.height() {
        for w in 0..binary.width() {
            if binary.get(h, w) {
                sh += h as f64;
                sw += w as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(ConfidenceError::NoSignal);
    }
    Ok((sh / n as f64, sw / n as f64))
}

/// Signed angle in degrees between the vertical image centerline and the ray
/// from the top-center point to the barycenter, measured in millimetres.
///
/// Positive when the barycenter lies on the `+Y_p` side (smaller column
/// index). Pixel centres sit at index + 0.5.
pub fn correction_angle(barycenter: (f64, f64), calib: &CalibrationSet) -> Result<f64, ConfidenceError> {
    let (h, w) = barycenter;
    let (wd, hd) = (calib.image_width as f64, calib.image_height as f64);
    if !(0.0..=hd - 1.0).contains(&h) || !(0.0..=wd - 1.0).contains(&w) {
        return Err(ConfidenceError::InvalidArgument(format!(
            "barycenter ({h}, {w}) outside the image"
        )));
    }
    if h == 0.0 {
        return Err(ConfidenceError::UndefinedAngle);
    }
    let lateral = ((wd - 1.0) / 2.0 - w) * calib.lateral_scale();
    let depth = (h + 0.5) * calib.axial_scale();
    Ok(lateral.atan2(depth).to_degrees())
}

/// Outcome of analysing one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionResult {
    /// `(h, w)` in pixel indices.
    pub barycenter: (f64, f64),
    pub theta_deg: f64,
    pub shadow_detected: bool,
    /// Fraction of columns whose near field (top quarter) has mean
    /// confidence below the threshold.
    pub shadow_fraction: f64,
}

/// Minimum `|θ_c|` for the shadow flag, degrees.
pub const SHADOW_ANGLE_DEG: f64 = 2.0;
/// Minimum shadowed-column fraction for the shadow flag.
pub const SHADOW_COLUMN_FRACTION: f64 = 0.10;

/// Confidence map, binarisation, barycenter and correction angle in one pass.
pub fn analyze_frame(
    img: &UsImage,
    params: &ConfidenceParams,
    t_com: f64,
    calib: &CalibrationSet,
) -> Result<CorrectionResult, ConfidenceError> {
    if img.width() != calib.image_width || img.height() != calib.image_height {
        return Err(ConfidenceError::InvalidArgument(format!(
            "image {}x{} does not match calibration {}x{}",
            img.width(),
            img.height(),
            calib.image_width,
            calib.image_height
        )));
    }
    let map = confidence_map(img, params)?;
    let bin = binarize_map(&map, t_com)?;
    let barycenter = weighted_barycenter(&bin)?;
    let theta_deg = correction_angle(barycenter, calib)?;
    let near = (map.height() / 4).max(1);
    let shadowed = (0..map.width())
        .filter(|&w| (0..near).map(|h| map.get(h, w)).sum::<f64>() / (near as f64) < t_com)
        .count() as f64
        / map.width() as f64;
    Ok(CorrectionResult {
        barycenter,
        theta_deg,
        shadow_detected: theta_deg.abs() > SHADOW_ANGLE_DEG && shadowed > SHADOW_COLUMN_FRACTION,
        shadow_fraction: shadowed,
    })
}
