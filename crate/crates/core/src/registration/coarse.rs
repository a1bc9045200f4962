use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::descriptors::{multiscale_descriptors, MultiscaleDescriptors, MultiscaleParams};
use super::RegistrationError;
use crate::geom::{best_rigid_fit, KdTree, PointCloud, RigidTransform, Vec3};
use crate::Scalar;

/// A descriptor match between a source and a target point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence<T> {
    pub source: usize,
    pub target: usize,
    /// Euclidean distance between the concatenated descriptors.
    pub distance: T,
}

#[derive(Clone, Debug)]
pub struct CoarseParams<T> {
    pub features: MultiscaleParams<T>,
    /// Largest accepted relative mismatch `|d_s − d_t| / max(d_s, d_t)` of
    /// pairwise distances between matched points.
    pub consistency_threshold: T,
    pub ransac_iterations: usize,
    /// Distance under which a transformed match counts as an inlier (mm).
    /// `None` means 0.4 times the descriptor base radius of the source.
    pub inlier_distance: Option<T>,
    pub seed: u64,
}

impl<T: Scalar> Default for CoarseParams<T> {
    fn default() -> Self {
        Self {
            features: MultiscaleParams::default(),
            consistency_threshold: T::lit(0.25),
            ransac_iterations: 4000,
            inlier_distance: None,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CoarseAlignment<T: Scalar> {
    pub transform: RigidTransform<T>,
    /// Reciprocal matches between persistent points.
    pub correspondences: Vec<Correspondence<T>>,
    /// Indices into `correspondences` that agree with `transform`.
    pub inliers: Vec<usize>,
}

const MIN_POINTS: usize = 50;

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |s, (x, y)| s + (*x - *y) * (*x - *y))
}

/// Best match in `to` for each entry of `from` (brute force, ties to lower index).
fn best_matches<T: Scalar>(from: &[Vec<T>], to: &[Vec<T>]) -> Vec<(usize, T)> {
    from.iter()
        .map(|f| {
            let mut best = (0, T::max_value().unwrap());
            for (j, t) in to.iter().enumerate() {
                let d = sq_dist(f, t);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

fn reciprocal_matches<T: Scalar>(
    src: &MultiscaleDescriptors<T>,
    dst: &MultiscaleDescriptors<T>,
) -> Vec<Correspondence<T>> {
    let s_sig: Vec<Vec<T>> = src.persistent.iter().map(|&i| src.signature(i)).collect();
    let d_sig: Vec<Vec<T>> = dst.persistent.iter().map(|&i| dst.signature(i)).collect();
    if s_sig.is_empty() || d_sig.is_empty() {
        return Vec::new();
    }
    let fwd = best_matches(&s_sig, &d_sig);
    let back = best_matches(&d_sig, &s_sig);
    fwd.iter()
        .enumerate()
        .filter(|(a, (b, _))| back[*b].0 == *a)
        .map(|(a, &(b, d2))| Correspondence {
            source: src.persistent[a],
            target: dst.persistent[b],
            distance: d2.sqrt(),
        })
        .collect()
}

fn consistent<T: Scalar>(
    a: (&Vec3<T>, &Vec3<T>),
    b: (&Vec3<T>, &Vec3<T>),
    thresh: T,
) -> bool {
    let ds = (a.0 - b.0).norm();
    let dt = (a.1 - b.1).norm();
    let m = ds.max(dt);
    m > T::zero() && (ds - dt).abs() <= thresh * m
}

/// Initial transform mapping `source` onto `target` from persistent
/// multi-scale feature matches.
///
/// Matches are reciprocal nearest neighbors in descriptor space. Triples of
/// matches whose pairwise distances agree within the consistency threshold
/// vote for a rigid transform; the hypothesis with most inliers is refit on
/// all of them.
pub fn coarse_align<T: Scalar>(
    source: &PointCloud<T>,
    target: &PointCloud<T>,
    params: &CoarseParams<T>,
) -> Result<CoarseAlignment<T>, RegistrationError> {
    if source.len() < MIN_POINTS || target.len() < MIN_POINTS {
        return Err(RegistrationError::InvalidArgument(format!(
            "coarse alignment needs at least {MIN_POINTS} points per cloud"
        )));
    }
    let mut tparams = params.features.clone();
    let sd = multiscale_descriptors(source, &params.features)?;
    // Same support radius on both sides keeps descriptors comparable.
    tparams.base_radius = Some(sd.base_radius);
    let td = multiscale_descriptors(target, &tparams)?;
    let corr = reciprocal_matches(&sd, &td);
    if corr.len() < 3 {
        return Err(RegistrationError::CoarseAlignmentFailed(format!(
            "{} correspondences survive matching",
            corr.len()
        )));
    }
    let inlier_dist = params
        .inlier_distance
        .unwrap_or(sd.base_radius * T::lit(0.4));
    let thresh = params.consistency_threshold;
    let sp = |c: &Correspondence<T>| &source.points()[c.source];
    let tp = |c: &Correspondence<T>| &target.points()[c.target];

    let m = corr.len();
    let mut triples: Vec<[usize; 3]> = Vec::new();
    let total = m * (m - 1) * (m - 2) / 6;
    if total <= params.ransac_iterations {
        for a in 0..m {
            for b in a + 1..m {
                for c in b + 1..m {
                    triples.push([a, b, c]);
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        while triples.len() < params.ransac_iterations {
            let a = rng.random_range(0..m);
            let b = rng.random_range(0..m);
            let c = rng.random_range(0..m);
            if a != b && b != c && a != c {
                triples.push([a, b, c]);
            }
        }
    }

    let score = |t: &RigidTransform<T>| -> (Vec<usize>, T) {
        let mut inl = Vec::new();
        let mut err = T::zero();
        for (k, c) in corr.iter().enumerate() {
            let d = (t.apply(sp(c)) - tp(c)).norm();
            if d <= inlier_dist {
                inl.push(k);
                err += d;
            }
        }
        (inl, err)
    };

    let mut best: Option<(RigidTransform<T>, Vec<usize>, T)> = None;
    for tri in &triples {
        let c = [&corr[tri[0]], &corr[tri[1]], &corr[tri[2]]];
        let ok = (0..3).all(|i| {
            let j = (i + 1) % 3;
            consistent((sp(c[i]), tp(c[i])), (sp(c[j]), tp(c[j])), thresh)
        });
        if !ok {
            continue;
        }
        let s: Vec<Vec3<T>> = c.iter().map(|x| *sp(x)).collect();
        let d: Vec<Vec3<T>> = c.iter().map(|x| *tp(x)).collect();
        let Ok(t) = best_rigid_fit(&s, &d) else {
            continue;
        };
        let (inl, err) = score(&t);
        let better = match &best {
            None => true,
            Some((_, bi, be)) => inl.len() > bi.len() || (inl.len() == bi.len() && err < *be),
        };
        if better {
            best = Some((t, inl, err));
        }
    }
    let Some((mut transform, mut inliers, _)) = best else {
        return Err(RegistrationError::CoarseAlignmentFailed(
            "no consistent correspondence triple".into(),
        ));
    };
    if inliers.len() < 3 {
        return Err(RegistrationError::CoarseAlignmentFailed(format!(
            "only {} consistent correspondences",
            inliers.len()
        )));
    }
    let s: Vec<Vec3<T>> = inliers.iter().map(|&k| *sp(&corr[k])).collect();
    let d: Vec<Vec3<T>> = inliers.iter().map(|&k| *tp(&corr[k])).collect();
    if let Ok(t) = best_rigid_fit(&s, &d) {
        let (inl, _) = score(&t);
        if inl.len() >= inliers.len() {
            transform = t;
            inliers = inl;
        }
    }
    Ok(CoarseAlignment {
        transform,
        correspondences: corr,
        inliers,
    })
}

/// Nearest-point RMS of `source` under `t` against `target` over the
/// `keep` fraction of best-matched points, used to rank initial guesses.
/// Trimming lets a start that overlaps only part of the target win over
/// one that covers all of it badly.
pub(crate) fn nearest_rms<T: Scalar>(source: &[Vec3<T>], tree: &KdTree<T>, t: &RigidTransform<T>, keep: T) -> T {
    let mut d: Vec<T> = source
        .iter()
        .map(|p| tree.nearest(&t.apply(p)).map(|n| n.dist_sq).unwrap_or_else(T::zero))
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = (T::from_usize(d.len()).unwrap() * keep).ceil().to_usize().unwrap_or(d.len()).clamp(1, d.len().max(1));
    let sum = d.iter().take(n).fold(T::zero(), |a, v| a + *v);
    (sum / T::from_usize(n).unwrap()).sqrt()
}
