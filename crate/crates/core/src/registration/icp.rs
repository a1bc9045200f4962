use std::fmt::Write as _;

use super::RegistrationError;
use crate::geom::{best_rigid_fit, KdTree, PointCloud, RigidTransform, Vec3};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct IcpParams<T> {
    pub max_iterations: usize,
    /// Stop once the RMS improves by less than this (mm).
    pub mse_delta_tolerance: T,
    /// Pairs farther apart are not used for the fit (mm). `None` means five
    /// times the target's median point spacing.
    pub rejection_distance: Option<T>,
}

impl<T: Scalar> Default for IcpParams<T> {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            mse_delta_tolerance: T::lit(1e-4),
            rejection_distance: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationResult<T: Scalar> {
    /// Maps source coordinates into target coordinates.
    pub transform: RigidTransform<T>,
    /// Error before the first update followed by one entry per accepted
    /// iteration, in mm. Distances are capped at the rejection distance so
    /// the sequence never increases.
    pub mse_history: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Fraction of source points with a pair inside the rejection distance.
    pub inlier_fraction: T,
    /// RMS distance over those pairs (mm).
    pub inlier_rmse: T,
}

impl<T: Scalar> RegistrationResult<T> {
    pub fn final_mse(&self) -> T {
        *self.mse_history.last().expect("history is never empty")
    }

    /// `iteration,mse` records, one per history entry.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iteration,mse\n");
        for (i, m) in self.mse_history.iter().enumerate() {
            let _ = writeln!(s, "{i},{}", m.as_f64());
        }
        s
    }
}

struct Pairing<T: Scalar> {
    capped_rms: T,
    src: Vec<Vec3<T>>,
    dst: Vec<Vec3<T>>,
    inlier_sq: T,
}

fn pair_up<T: Scalar>(
    source: &[Vec3<T>],
    tree: &KdTree<T>,
    t: &RigidTransform<T>,
    reject: T,
) -> Pairing<T> {
    let r2 = reject * reject;
    let mut capped = T::zero();
    let mut inlier_sq = T::zero();
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for p in source {
        let q = t.apply(p);
        let nb = tree.nearest(&q).expect("target is non-empty");
        if nb.dist_sq <= r2 {
            capped += nb.dist_sq;
            inlier_sq += nb.dist_sq;
            src.push(q);
            dst.push(tree.points()[nb.index]);
        } else {
            capped += r2;
        }
    }
    let n = T::from_usize(source.len()).unwrap();
    Pairing {
        capped_rms: (capped / n).sqrt(),
        src,
        dst,
        inlier_sq,
    }
}

/// Point-to-point ICP from `init`.
///
/// Each iteration pairs every transformed source point with its nearest
/// target point, drops pairs beyond the rejection distance and solves the
/// closed-form rigid fit. An update that would raise the error is not taken
/// and ends the loop.
pub fn icp_refine<T: Scalar>(
    source: &PointCloud<T>,
    target: &PointCloud<T>,
    init: &RigidTransform<T>,
    params: &IcpParams<T>,
) -> Result<RegistrationResult<T>, RegistrationError> {
    if source.is_empty() || target.is_empty() {
        return Err(RegistrationError::InvalidArgument("empty cloud".into()));
    }
    if params.max_iterations == 0 || !(params.mse_delta_tolerance > T::zero()) {
        return Err(RegistrationError::InvalidArgument(
            "max_iterations and tolerance must be positive".into(),
        ));
    }
    let reject = match params.rejection_distance {
        Some(r) if r > T::zero() => r,
        Some(_) => {
            return Err(RegistrationError::InvalidArgument(
                "rejection distance must be positive".into(),
            ))
        }
        None => {
            let s = target.median_spacing();
            if s > T::zero() {
                s * T::lit(5.0)
            } else {
                T::lit(10.0)
            }
        }
    };
    let tree = KdTree::from_cloud(target);
    let pts = source.points();
    let fail = |reason: &str, history: &[T]| RegistrationError::Failed {
        reason: reason.into(),
        history: history.iter().map(|v| v.as_f64()).collect(),
    };

    let mut t = *init;
    let mut pairing = pair_up(pts, &tree, &t, reject);
    let mut history = vec![pairing.capped_rms];
    if pairing.src.is_empty() {
        return Err(fail("no correspondence within rejection distance", &history));
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        let step = match best_rigid_fit(&pairing.src, &pairing.dst) {
            Ok(s) => s,
            Err(_) if pairing.src.len() < 3 => {
                return Err(fail("fewer than 3 correspondences", &history))
            }
            Err(e) => return Err(e.into()),
        };
        let candidate = step.compose(&t).renormalized();
        let next = pair_up(pts, &tree, &candidate, reject);
        if next.src.is_empty() {
            return Err(fail("all correspondences rejected", &history));
        }
        let prev = pairing.capped_rms;
        if next.capped_rms > prev {
            converged = true;
            break;
        }
        t = candidate;
        pairing = next;
        history.push(pairing.capped_rms);
        iterations += 1;
        if prev - pairing.capped_rms < params.mse_delta_tolerance {
            converged = true;
            break;
        }
    }
    let m = T::from_usize(pairing.src.len()).unwrap();
    Ok(RegistrationResult {
        transform: t,
        mse_history: history,
        iterations,
        converged,
        inlier_fraction: m / T::from_usize(pts.len()).unwrap(),
        inlier_rmse: (pairing.inlier_sq / m).sqrt(),
    })
}

/// Point-to-plane ICP from `init`; `target` must carry normals.
///
/// Each iteration linearises the rotation and solves the 6×6 normal
/// equations of `Σ ((T·s − q)·n_q)²`, which lets the source slide along
/// the target surface instead of being pulled toward its sample points.
/// History entries are RMS point-to-plane distances, capped like
/// [`icp_refine`]'s, and the loop ends on the first non-improving step.
pub fn icp_refine_point_to_plane<T: Scalar>(
    source: &PointCloud<T>,
    target: &PointCloud<T>,
    init: &RigidTransform<T>,
    params: &IcpParams<T>,
) -> Result<RegistrationResult<T>, RegistrationError> {
    let normals = target.normals().ok_or(RegistrationError::MissingNormals)?;
    if source.is_empty() || target.is_empty() {
        return Err(RegistrationError::InvalidArgument("empty cloud".into()));
    }
    if params.max_iterations == 0 || !(params.mse_delta_tolerance > T::zero()) {
        return Err(RegistrationError::InvalidArgument(
            "max_iterations and tolerance must be positive".into(),
        ));
    }
    let reject = params
        .rejection_distance
        .filter(|r| *r > T::zero())
        .unwrap_or_else(|| target.median_spacing().max(T::lit(0.5)) * T::lit(5.0));
    let tree = KdTree::from_cloud(target);
    let pts = source.points();
    let n = T::from_usize(pts.len()).unwrap();
    let r2 = reject * reject;

    // (rms, matched pairs as (point, target point, target normal), inlier sum of squares)
    let pair = |t: &RigidTransform<T>| {
        let mut capped = T::zero();
        let mut inlier = T::zero();
        let mut pairs = Vec::with_capacity(pts.len());
        for p in pts {
            let q = t.apply(p);
            let nb = tree.nearest(&q).expect("target is non-empty");
            if nb.dist_sq <= r2 {
                let nrm = normals[nb.index];
                let d = (q - tree.points()[nb.index]).dot(&nrm);
                capped += d * d;
                inlier += d * d;
                pairs.push((q, tree.points()[nb.index], nrm));
            } else {
                capped += r2;
            }
        }
        ((capped / n).sqrt(), pairs, inlier)
    };

    let mut t = *init;
    let (mut rms, mut pairs, mut inlier) = pair(&t);
    let mut history = vec![rms];
    if pairs.len() < 6 {
        return Err(RegistrationError::Failed {
            reason: "fewer than 6 correspondences".into(),
            history: history.iter().map(|v| v.as_f64()).collect(),
        });
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        let mut a = nalgebra::Matrix6::<T>::zeros();
        let mut b = nalgebra::Vector6::<T>::zeros();
        for (p, q, nrm) in &pairs {
            let c = p.cross(nrm);
            let j = nalgebra::Vector6::new(c.x, c.y, c.z, nrm.x, nrm.y, nrm.z);
            let r = (p - q).dot(nrm);
            a += j * j.transpose();
            b -= j * r;
        }
        let Some(x) = a.cholesky().map(|c| c.solve(&b)) else {
            // a flat or otherwise degenerate overlap leaves a free direction
            converged = true;
            break;
        };
        let w = Vec3::new(x[0], x[1], x[2]);
        let angle = w.norm();
        let step = RigidTransform::from_axis_angle(&w, angle, Vec3::new(x[3], x[4], x[5]));
        let candidate = step.compose(&t).renormalized();
        let (next_rms, next_pairs, next_inlier) = pair(&candidate);
        if next_rms > rms || next_pairs.len() < 6 {
            converged = true;
            break;
        }
        let prev = rms;
        t = candidate;
        (rms, pairs, inlier) = (next_rms, next_pairs, next_inlier);
        history.push(rms);
        iterations += 1;
        if prev - rms < params.mse_delta_tolerance {
            converged = true;
            break;
        }
    }
    let m = T::from_usize(pairs.len()).unwrap();
    Ok(RegistrationResult {
        transform: t,
        mse_history: history,
        iterations,
        converged,
        inlier_fraction: m / n,
        inlier_rmse: (inlier / m).sqrt(),
    })
}
