use super::{GeomError, KdTree, RigidTransform, Vec3};
use crate::Scalar;

/// Ordered point set with optional unit normals (same length as points).
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T: Scalar> {
    points: Vec<Vec3<T>>,
    normals: Option<Vec<Vec3<T>>>,
}

impl<T: Scalar> PointCloud<T> {
    pub fn new(points: Vec<Vec3<T>>) -> Self {
        Self {
            points,
            normals: None,
        }
    }

    pub fn with_normals(points: Vec<Vec3<T>>, normals: Vec<Vec3<T>>) -> Result<Self, GeomError> {
        if normals.len() != points.len() {
            return Err(GeomError::InvalidArgument(format!(
                "{} normals for {} points",
                normals.len(),
                points.len()
            )));
        }
        for (i, n) in normals.iter().enumerate() {
            let dev = (n.norm() - T::one()).abs().as_f64();
            if !(dev <= T::UNIT_TOL) {
                return Err(GeomError::InvalidArgument(format!(
                    "normal {i} has length deviation {dev:.3e}"
                )));
            }
        }
        Ok(Self {
            points,
            normals: Some(normals),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vec3<T>]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn without_normals(&self) -> Self {
        Self::new(self.points.clone())
    }

    pub fn into_parts(self) -> (Vec<Vec3<T>>, Option<Vec<Vec3<T>>>) {
        (self.points, self.normals)
    }

    /// Rigidly moves points and rotates normals.
    pub fn transformed(&self, t: &RigidTransform<T>) -> Self {
        Self {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| t.rotate(n)).collect()),
        }
    }

    /// Sub-cloud in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
        }
    }

    /// Keeps the points for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(usize, &Vec3<T>) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| keep(i, &self.points[i]))
            .collect();
        self.select(&idx)
    }

    pub fn centroid(&self) -> Option<Vec3<T>> {
        if self.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        Some(sum / T::from_usize(self.len()).unwrap())
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Length of the bounding-box diagonal.
    pub fn diameter(&self) -> T {
        self.bounds()
            .map(|(lo, hi)| (hi - lo).norm())
            .unwrap_or_else(T::zero)
    }

    /// Median distance from each point to its nearest other point.
    pub fn median_spacing(&self) -> T {
        if self.len() < 2 {
            return T::zero();
        }
        let tree = KdTree::new(&self.points);
        let mut d: Vec<T> = self
            .points
            .iter()
            .map(|p| tree.knn(p, 2)[1].dist_sq.sqrt())
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        d[d.len() / 2]
    }

    pub fn cast<U: Scalar>(&self) -> PointCloud<U> {
        let conv = |v: &Vec3<T>| v.map(|c| U::lit(c.as_f64()));
        PointCloud {
            points: self.points.iter().map(conv).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(conv).collect()),
        }
    }

    /// Concatenation; normals are kept only if both sides have them.
    pub fn merged(&self, other: &Self) -> Self {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let normals = match (&self.normals, &other.normals) {
            (Some(a), Some(b)) => {
                let mut n = a.clone();
                n.extend_from_slice(b);
                Some(n)
            }
            _ => None,
        };
        Self { points, normals }
    }
}

/// Root-mean-square distance between corresponding points, in mm.
///
/// `correspondence[i]` is the index in `b` paired with point `i` of `a`.
/// Despite the name this returns the root of the mean squared distance,
/// so it carries length units.
pub fn cloud_mse<T: Scalar>(
    a: &PointCloud<T>,
    b: &PointCloud<T>,
    correspondence: &[usize],
) -> Result<T, GeomError> {
    if correspondence.is_empty() {
        return Err(GeomError::InvalidArgument("empty correspondence".into()));
    }
    if correspondence.len() > a.len() {
        return Err(GeomError::InvalidArgument(
            "correspondence longer than source cloud".into(),
        ));
    }
    let mut sum = T::zero();
    for (i, &j) in correspondence.iter().enumerate() {
        let q = b.points().get(j).ok_or_else(|| {
            GeomError::InvalidArgument(format!("correspondence index {j} out of range"))
        })?;
        sum += (a.points()[i] - q).norm_squared();
    }
    Ok((sum / T::from_usize(correspondence.len()).unwrap()).sqrt())
}
