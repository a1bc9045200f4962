use std::cmp::Ordering;

use super::{GeomError, PointCloud, Vec3};
use crate::Scalar;

const LEAF_SIZE: usize = 8;
const LEAF: u8 = 3;

/// A neighbor returned by a query: point index and squared distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor<T> {
    pub index: usize,
    pub dist_sq: T,
}

impl<T: Scalar> Neighbor<T> {
    /// Orders by distance, then by index.
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.dist_sq
            .partial_cmp(&other.dist_sq)
            .unwrap_or(Ordering::Equal)
            .then(self.index.cmp(&other.index))
    }
}

/// Balanced k-d tree over a fixed point set.
///
/// Results are identical to an exhaustive scan: neighbors are ordered by
/// squared distance and ties go to the lower index.
#[derive(Clone, Debug)]
pub struct KdTree<T: Scalar> {
    points: Vec<Vec3<T>>,
    order: Vec<usize>,
    axis: Vec<u8>,
}

impl<T: Scalar> KdTree<T> {
    pub fn new(points: &[Vec3<T>]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            axis: vec![LEAF; points.len()],
        };
        let n = points.len();
        tree.build(0, n);
        tree
    }

    pub fn from_cloud(cloud: &PointCloud<T>) -> Self {
        Self::new(cloud.points())
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

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF_SIZE {
            return;
        }
        let mut min = self.points[self.order[lo]];
        let mut max = min;
        for &i in &self.order[lo..hi] {
            let p = &self.points[i];
            for d in 0..3 {
                if p[d] < min[d] {
                    min[d] = p[d];
                }
                if p[d] > max[d] {
                    max[d] = p[d];
                }
            }
        }
        let ext = max - min;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = lo + (hi - lo) / 2;
        let pts = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            pts[a][axis]
                .partial_cmp(&pts[b][axis])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        self.axis[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    /// Nearest point, or `None` on an empty tree.
    pub fn nearest(&self, q: &Vec3<T>) -> Option<Neighbor<T>> {
        self.knn(q, 1).into_iter().next()
    }

    /// The `k` nearest points in ascending distance order.
    pub fn knn(&self, q: &Vec3<T>, k: usize) -> Vec<Neighbor<T>> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut best: Vec<Neighbor<T>> = Vec::with_capacity(k + 1);
        self.knn_rec(q, k, 0, self.points.len(), &mut best);
        best
    }

    fn offer(&self, q: &Vec3<T>, i: usize, k: usize, best: &mut Vec<Neighbor<T>>) {
        let cand = Neighbor {
            index: i,
            dist_sq: (self.points[i] - q).norm_squared(),
        };
        if best.len() == k {
            if cand.cmp_key(&best[k - 1]) != Ordering::Less {
                return;
            }
            best.pop();
        }
        let pos = best
            .binary_search_by(|b| b.cmp_key(&cand))
            .unwrap_or_else(|e| e);
        best.insert(pos, cand);
    }

    fn knn_rec(&self, q: &Vec3<T>, k: usize, lo: usize, hi: usize, best: &mut Vec<Neighbor<T>>) {
        if hi <= lo {
            return;
        }
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                self.offer(q, i, k, best);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = self.axis[mid] as usize;
        let pivot = self.order[mid];
        let diff = q[axis] - self.points[pivot][axis];
        let (first, second) = if diff < T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(q, k, first.0, first.1, best);
        self.offer(q, pivot, k, best);
        // `<=` keeps equal-distance candidates with lower indices reachable.
        if best.len() < k || diff * diff <= best[best.len() - 1].dist_sq {
            self.knn_rec(q, k, second.0, second.1, best);
        }
    }

    /// All points within `radius` (inclusive), ascending by distance then index.
    pub fn within_radius(&self, q: &Vec3<T>, radius: T) -> Vec<Neighbor<T>> {
        let mut out = Vec::new();
        let r2 = radius * radius;
        self.radius_rec(q, r2, 0, self.points.len(), &mut out);
        out.sort_by(|a, b| a.cmp_key(b));
        out
    }

    fn radius_rec(&self, q: &Vec3<T>, r2: T, lo: usize, hi: usize, out: &mut Vec<Neighbor<T>>) {
        if hi <= lo {
            return;
        }
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                let d = (self.points[i] - q).norm_squared();
                if d <= r2 {
                    out.push(Neighbor { index: i, dist_sq: d });
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = self.axis[mid] as usize;
        let pivot = self.order[mid];
        let d = (self.points[pivot] - q).norm_squared();
        if d <= r2 {
            out.push(Neighbor {
                index: pivot,
                dist_sq: d,
            });
        }
        let diff = q[axis] - self.points[pivot][axis];
        if diff <= T::zero() || diff * diff <= r2 {
            self.radius_rec(q, r2, lo, mid, out);
        }
        if diff >= T::zero() || diff * diff <= r2 {
            self.radius_rec(q, r2, mid + 1, hi, out);
        }
    }
}

/// Indices of the `k` points of `cloud` closest to `query`, nearest first.
pub fn knn_search<T: Scalar>(
    cloud: &PointCloud<T>,
    query: &Vec3<T>,
    k: usize,
) -> Result<Vec<usize>, GeomError> {
    if cloud.is_empty() {
        return Err(GeomError::InvalidArgument("empty cloud".into()));
    }
    if k == 0 || k > cloud.len() {
        return Err(GeomError::InvalidArgument(format!(
            "k = {k} outside 1..={}",
            cloud.len()
        )));
    }
    Ok(KdTree::from_cloud(cloud)
        .knn(query, k)
        .into_iter()
        .map(|n| n.index)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_knn(points: &[Vec3<f64>], q: &Vec3<f64>, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        idx.sort_by(|&a, &b| {
            (points[a] - q)
                .norm_squared()
                .partial_cmp(&(points[b] - q).norm_squared())
                .unwrap()
                .then(a.cmp(&b))
        });
        idx.truncate(k);
        idx
    }

    #[test]
    fn nearest_by_inspection() {
        let cloud = PointCloud::new(vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)]);
        assert_eq!(knn_search(&cloud, &Vec3::new(0.1, 0.0, 0.0), 1).unwrap(), vec![0]);
    }

    #[test]
    fn invalid_k() {
        let cloud = PointCloud::new(vec![Vec3::new(0.0, 0.0, 0.0)]);
        assert!(knn_search(&cloud, &Vec3::zeros(), 2).is_err());
        assert!(knn_search(&cloud, &Vec3::zeros(), 0).is_err());
        assert!(knn_search(&PointCloud::<f64>::new(vec![]), &Vec3::zeros(), 1).is_err());
    }

    #[test]
    fn ties_go_to_lower_index() {
        // integer grid has many equal distances
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                for z in 0..3 {
                    pts.push(Vec3::new(x as f64, y as f64, z as f64));
                }
            }
        }
        let tree = KdTree::new(&pts);
        for q in [Vec3::new(2.5, 2.5, 1.0), Vec3::new(0.0, 0.0, 0.0), Vec3::new(3.0, 2.0, 1.5)] {
            for k in [1, 4, 9, 30] {
                let got: Vec<usize> = tree.knn(&q, k).iter().map(|n| n.index).collect();
                assert_eq!(got, brute_knn(&pts, &q, k));
            }
        }
    }

    proptest! {
        #[test]
        fn knn_matches_exhaustive(
            raw in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0), 200),
            q in (-60.0f64..60.0, -60.0f64..60.0, -60.0f64..60.0),
            k in 1usize..25,
        ) {
            let pts: Vec<Vec3<f64>> = raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            let q = Vec3::new(q.0, q.1, q.2);
            let tree = KdTree::new(&pts);
            let got: Vec<usize> = tree.knn(&q, k).iter().map(|n| n.index).collect();
            prop_assert_eq!(got, brute_knn(&pts, &q, k));
        }

        #[test]
        fn radius_matches_exhaustive(
            raw in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0), 150),
            r in 0.5f64..15.0,
        ) {
            let pts: Vec<Vec3<f64>> = raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            let q = Vec3::new(1.0, -2.0, 0.5);
            let tree = KdTree::new(&pts);
            let got: Vec<usize> = tree.within_radius(&q, r).iter().map(|n| n.index).collect();
            let all = brute_knn(&pts, &q, pts.len());
            let want: Vec<usize> = all.into_iter().filter(|&i| (pts[i] - q).norm_squared() <= r * r).collect();
            prop_assert_eq!(got, want);
        }
    }
}
