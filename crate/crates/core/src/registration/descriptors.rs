use super::RegistrationError;
use crate::geom::{KdTree, PointCloud, Vec3};
use crate::Scalar;

/// Bins per angular feature; the descriptor concatenates three of them.
pub const BINS_PER_FEATURE: usize = 11;
pub const DESCRIPTOR_LEN: usize = 3 * BINS_PER_FEATURE;
pub const DEFAULT_SCALES: [f64; 3] = [0.5, 1.0, 1.5];
/// Default base support radius in multiples of the median point spacing.
pub const BASE_RADIUS_SPACINGS: f64 = 5.0;

/// Histogram of pair angles around one point at one scale.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDescriptor<T> {
    pub index: usize,
    /// `DESCRIPTOR_LEN` non-negative entries; all zero for isolated points.
    pub histogram: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct MultiscaleParams<T> {
    /// Multipliers of the base support radius.
    pub scales: Vec<T>,
    /// Base support radius in mm; `None` means `BASE_RADIUS_SPACINGS` median
    /// point spacings.
    pub base_radius: Option<T>,
    /// A point is distinctive at a scale when its distance to the mean
    /// descriptor exceeds `mean + alpha·std` of all such distances.
    pub persistence_alpha: T,
    /// ... and also exceeds this fraction of the mean descriptor's L1 mass.
    pub min_distinctiveness: T,
}

impl<T: Scalar> Default for MultiscaleParams<T> {
    fn default() -> Self {
        Self {
            scales: DEFAULT_SCALES.iter().map(|&s| T::lit(s)).collect(),
            base_radius: None,
            persistence_alpha: T::one(),
            min_distinctiveness: T::lit(0.05),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MultiscaleDescriptors<T> {
    pub base_radius: T,
    pub scales: Vec<T>,
    /// `per_scale[s][i]` is the descriptor of point `i` at scale `s`.
    pub per_scale: Vec<Vec<FeatureDescriptor<T>>>,
    /// Indices of points distinctive at every scale, ascending.
    pub persistent: Vec<usize>,
}

impl<T: Scalar> MultiscaleDescriptors<T> {
    /// All scales of point `i` concatenated.
    pub fn signature(&self, i: usize) -> Vec<T> {
        self.per_scale
            .iter()
            .flat_map(|s| s[i].histogram.iter().copied())
            .collect()
    }

    pub fn persistent_fraction(&self) -> f64 {
        match self.per_scale.first() {
            Some(s) if !s.is_empty() => self.persistent.len() as f64 / s.len() as f64,
            _ => 0.0,
        }
    }
}

/// Descriptors at each scale plus the set of points that stay distinctive
/// across all of them.
pub fn multiscale_descriptors<T: Scalar>(
    cloud: &PointCloud<T>,
    params: &MultiscaleParams<T>,
) -> Result<MultiscaleDescriptors<T>, RegistrationError> {
    let normals = cloud.normals().ok_or(RegistrationError::MissingNormals)?;
    if params.scales.is_empty() || params.scales.iter().any(|s| *s <= T::zero()) {
        return Err(RegistrationError::InvalidArgument(
            "scales must be non-empty and positive".into(),
        ));
    }
    let base_radius = match params.base_radius {
        Some(r) if r > T::zero() => r,
        Some(_) => {
            return Err(RegistrationError::InvalidArgument(
                "base radius must be positive".into(),
            ))
        }
        None => cloud.median_spacing() * T::lit(BASE_RADIUS_SPACINGS),
    };
    let tree = KdTree::from_cloud(cloud);
    let n = cloud.len();

    let mut per_scale = Vec::with_capacity(params.scales.len());
    let mut distinctive = vec![true; n];
    for &scale in &params.scales {
        let hists = fpfh(cloud.points(), normals, &tree, base_radius * scale);
        mark_distinctive(&hists, params, &mut distinctive);
        per_scale.push(
            hists
                .into_iter()
                .enumerate()
                .map(|(index, histogram)| FeatureDescriptor { index, histogram })
                .collect(),
        );
    }
    let persistent = (0..n).filter(|&i| distinctive[i]).collect();
    Ok(MultiscaleDescriptors {
        base_radius,
        scales: params.scales.clone(),
        per_scale,
        persistent,
    })
}

fn mark_distinctive<T: Scalar>(hists: &[Vec<T>], params: &MultiscaleParams<T>, keep: &mut [bool]) {
    let valid: Vec<usize> = (0..hists.len())
        .filter(|&i| hists[i].iter().any(|v| *v > T::zero()))
        .collect();
    for (i, h) in hists.iter().enumerate() {
        if h.iter().all(|v| *v == T::zero()) {
            keep[i] = false;
        }
    }
    if valid.is_empty() {
        return;
    }
    let m = T::from_usize(valid.len()).unwrap();
    let mut mean = vec![T::zero(); DESCRIPTOR_LEN];
    for &i in &valid {
        for (a, b) in mean.iter_mut().zip(&hists[i]) {
            *a += *b;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mass: T = mean.iter().fold(T::zero(), |a, b| a + *b);

    let dist: Vec<T> = valid
        .iter()
        .map(|&i| l1(&hists[i], &mean))
        .collect();
    let mu = dist.iter().fold(T::zero(), |a, b| a + *b) / m;
    let var = dist.iter().fold(T::zero(), |a, d| a + (*d - mu) * (*d - mu)) / m;
    let thresh = (mu + params.persistence_alpha * var.sqrt()).max(params.min_distinctiveness * mass);
    for (&i, d) in valid.iter().zip(&dist) {
        if *d <= thresh {
            keep[i] = false;
        }
    }
}

fn l1<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + (*x - *y).abs())
}

/// Darboux-frame angle triple of an oriented point pair, or `None` when
/// the pair is coincident or the frame is undefined.
fn pair_features<T: Scalar>(
    p1: &Vec3<T>,
    n1: &Vec3<T>,
    p2: &Vec3<T>,
    n2: &Vec3<T>,
) -> Option<(T, T, T)> {
    let mut dp = p2 - p1;
    let len = dp.norm();
    if len == T::zero() {
        return None;
    }
    let a1 = n1.dot(&dp) / len;
    let a2 = n2.dot(&dp) / len;
    let (u, n_other, f3) = if a1.abs().clamp(T::zero(), T::one()).acos()
        > a2.abs().clamp(T::zero(), T::one()).acos()
    {
        dp = -dp;
        (n2, n1, -a2)
    } else {
        (n1, n2, a1)
    };
    let v = dp.cross(u);
    let vn = v.norm();
    if vn == T::zero() {
        return None;
    }
    let v = v / vn;
    let w = u.cross(&v);
    let f2 = v.dot(n_other);
    let f1 = w.dot(n_other).atan2(u.dot(n_other));
    Some((f1, f2, f3))
}

fn bin<T: Scalar>(unit: T) -> usize {
    let b = (unit * T::lit(BINS_PER_FEATURE as f64)).floor().as_f64();
    (b.max(0.0) as usize).min(BINS_PER_FEATURE - 1)
}

/// Simplified histograms (each feature normalised to sum 100).
fn spfh<T: Scalar>(
    points: &[Vec3<T>],
    normals: &[Vec3<T>],
    hoods: &[Vec<(usize, T)>],
) -> Vec<Vec<T>> {
    let two_pi = T::two_pi();
    let hundred = T::lit(100.0);
    hoods
        .iter()
        .enumerate()
        .map(|(i, hood)| {
            let mut h = vec![T::zero(); DESCRIPTOR_LEN];
            let mut count = 0usize;
            for &(j, _) in hood {
                if let Some((f1, f2, f3)) = pair_features(&points[i], &normals[i], &points[j], &normals[j]) {
                    h[bin((f1 + T::pi()) / two_pi)] += T::one();
                    h[BINS_PER_FEATURE + bin((f2 + T::one()) / T::lit(2.0))] += T::one();
                    h[2 * BINS_PER_FEATURE + bin((f3 + T::one()) / T::lit(2.0))] += T::one();
                    count += 1;
                }
            }
            if count > 0 {
                let inc = hundred / T::from_usize(count).unwrap();
                h.iter_mut().for_each(|v| *v *= inc);
            }
            h
        })
        .collect()
}

/// Fast point-feature histograms at support radius `radius`: the point's own
/// simplified histogram plus the inverse-squared-distance weighted mean of
/// its neighbors'.
fn fpfh<T: Scalar>(points: &[Vec3<T>], normals: &[Vec3<T>], tree: &KdTree<T>, radius: T) -> Vec<Vec<T>> {
    let hoods: Vec<Vec<(usize, T)>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            tree.within_radius(p, radius)
                .into_iter()
                .filter(|n| n.index != i && n.dist_sq > T::zero())
                .map(|n| (n.index, n.dist_sq))
                .collect()
        })
        .collect();
    let simple = spfh(points, normals, &hoods);
    let hundred = T::lit(100.0);
    hoods
        .iter()
        .enumerate()
        .map(|(i, hood)| {
            let mut h = vec![T::zero(); DESCRIPTOR_LEN];
            if hood.is_empty() {
                return h;
            }
            for &(j, d2) in hood {
                let w = T::one() / d2;
                for (a, b) in h.iter_mut().zip(&simple[j]) {
                    *a += w * *b;
                }
            }
            for f in 0..3 {
                let sub = &mut h[f * BINS_PER_FEATURE..(f + 1) * BINS_PER_FEATURE];
                let sum = sub.iter().fold(T::zero(), |a, b| a + *b);
                if sum > T::zero() {
                    let k = hundred / sum;
                    sub.iter_mut().for_each(|v| *v *= k);
                }
            }
            for (a, b) in h.iter_mut().zip(&simple[i]) {
                *a += *b;
            }
            h
        })
        .collect()
}
