use log::debug;

use super::coarse::nearest_rms;
use super::{coarse_align, icp_refine, CoarseAlignment, CoarseParams, IcpParams, RegistrationError, RegistrationResult};
use crate::geom::{principal_axes, KdTree, Mat3, PointCloud, RigidTransform};
use crate::Scalar;

/// Where the winning starting transform came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialGuess {
    Provided,
    Features,
    /// Principal axes matched, with the first axis flipped or not and the
    /// given roll step about it.
    Axes { flipped: bool, roll: usize },
}

#[derive(Clone, Debug)]
pub struct AlignParams<T: Scalar> {
    pub coarse: CoarseParams<T>,
    pub icp: IcpParams<T>,
    /// Try feature-based coarse alignment as one of the starts.
    pub use_features: bool,
    /// Try principal-axis alignments with this many roll steps per sign
    /// (0 disables them).
    pub roll_steps: usize,
    /// Points and ICP iterations used to score each start.
    pub probe_points: usize,
    pub probe_iterations: usize,
    /// Fraction of best-matched probe points a start is scored on, in
    /// `(0, 1]`; below 1 it tolerates partial overlap such as a cropped
    /// target.
    pub score_overlap: T,
    /// Starts whose refined rotation exceeds this angle (radians) are
    /// discarded; use when the motion is known to be bounded.
    pub max_rotation: Option<T>,
    /// Further caller-supplied starting transforms.
    pub extra_starts: Vec<RigidTransform<T>>,
}

impl<T: Scalar> Default for AlignParams<T> {
    fn default() -> Self {
        Self {
            coarse: CoarseParams::default(),
            icp: IcpParams::default(),
            use_features: true,
            roll_steps: 8,
            probe_points: 300,
            probe_iterations: 15,
            score_overlap: T::one(),
            max_rotation: None,
            extra_starts: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Alignment<T: Scalar> {
    pub transform: RigidTransform<T>,
    pub icp: RegistrationResult<T>,
    /// Start that ICP refined.
    pub initial: RigidTransform<T>,
    pub chosen: InitialGuess,
    pub coarse: Option<CoarseAlignment<T>>,
}

fn axis_frame<T: Scalar>(c: &PointCloud<T>) -> Option<(Mat3<T>, crate::geom::Vec3<T>)> {
    let pa = principal_axes(c).ok()?;
    Some((Mat3::from_columns(&pa.axes), pa.mean))
}

fn stride_subsample<T: Scalar>(c: &PointCloud<T>, n: usize) -> PointCloud<T> {
    if c.len() <= n || n == 0 {
        return c.clone();
    }
    let idx: Vec<usize> = (0..n).map(|k| k * c.len() / n).collect();
    c.select(&idx)
}

/// Coarse-to-fine rigid registration of `source` onto `target`.
///
/// Several starting transforms are scored by a short ICP on a subsample of
/// the source: the caller's guess (identity when `None`), the
/// feature-based coarse alignment, and principal-axis alignments rolled
/// about the first axis. Full ICP then refines the best of them.
pub fn align<T: Scalar>(
    source: &PointCloud<T>,
    target: &PointCloud<T>,
    init: Option<&RigidTransform<T>>,
    params: &AlignParams<T>,
) -> Result<Alignment<T>, RegistrationError> {
    if source.is_empty() || target.is_empty() {
        return Err(RegistrationError::InvalidArgument("empty cloud".into()));
    }
    if !(params.score_overlap > T::zero() && params.score_overlap <= T::one()) {
        return Err(RegistrationError::InvalidArgument("score_overlap must lie in (0, 1]".into()));
    }
    let mut starts: Vec<(InitialGuess, RigidTransform<T>)> =
        vec![(InitialGuess::Provided, init.copied().unwrap_or_else(RigidTransform::identity))];

    starts.extend(params.extra_starts.iter().map(|t| (InitialGuess::Provided, *t)));
    let mut coarse = None;
    if params.use_features && source.has_normals() && target.has_normals() {
        match coarse_align(source, target, &params.coarse) {
            Ok(c) => {
                starts.push((InitialGuess::Features, c.transform));
                coarse = Some(c);
            }
            Err(e) => debug!("feature start unavailable: {e}"),
        }
    }
    if params.roll_steps > 0 {
        if let (Some((bs, ms)), Some((bt, mt))) = (axis_frame(source), axis_frame(target)) {
            for flipped in [false, true] {
                for roll in 0..params.roll_steps {
                    let a = T::two_pi() * T::from_usize(roll).unwrap()
                        / T::from_usize(params.roll_steps).unwrap();
                    let mut spin = RigidTransform::from_axis_angle(
                        &crate::geom::Vec3::x(),
                        a,
                        crate::geom::Vec3::zeros(),
                    )
                    .rotation()
                    .clone_owned();
                    if flipped {
                        spin *= Mat3::from_diagonal(&crate::geom::Vec3::new(-T::one(), -T::one(), T::one()));
                    }
                    let r = bt * spin * bs.transpose();
                    let Ok(rt) = RigidTransform::from_approximate(r, mt - r * ms) else {
                        continue;
                    };
                    starts.push((InitialGuess::Axes { flipped, roll }, rt));
                }
            }
        }
    }

    let probe = stride_subsample(source, params.probe_points);
    let tree = KdTree::from_cloud(target);
    let mut probe_icp = params.icp.clone();
    probe_icp.max_iterations = params.probe_iterations.max(1);
    if probe_icp.rejection_distance.is_none() {
        probe_icp.rejection_distance = Some(target.median_spacing() * T::lit(5.0));
    }
    let mut best: Option<(InitialGuess, RigidTransform<T>, T)> = None;
    for (kind, t0) in &starts {
        let refined = if starts.len() == 1 {
            *t0
        } else {
            match icp_refine(&probe, target, t0, &probe_icp) {
                Ok(r) => r.transform,
                Err(_) => continue,
            }
        };
        if params.max_rotation.is_some_and(|m| refined.rotation_angle() > m) {
            debug!("start {kind:?}: rotation beyond limit");
            continue;
        }
        let score = nearest_rms(probe.points(), &tree, &refined, params.score_overlap);
        debug!("start {kind:?}: probe rms {:.3}", score.as_f64());
        if best.as_ref().is_none_or(|b| score < b.2) {
            best = Some((*kind, refined, score));
        }
    }
    let (chosen, initial, _) = best.ok_or_else(|| RegistrationError::Failed {
        reason: "no starting transform produced correspondences".into(),
        history: Vec::new(),
    })?;
    let icp = icp_refine(source, target, &initial, &params.icp)?;
    Ok(Alignment {
        transform: icp.transform,
        icp,
        initial,
        chosen,
        coarse,
    })
}
