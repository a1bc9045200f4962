use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PointCloud, Vec3};
use crate::Scalar;

/// Greedy maximal Poisson-disc subset: input points are visited in a seeded
/// random order and kept when no kept point lies closer than `radius`.
///
/// Returned indices are ascending. Every pair of kept points is at least
/// `radius` apart and every dropped point has a kept point within `radius`.
pub fn poisson_disc_indices<T: Scalar>(cloud: &PointCloud<T>, radius: T, seed: u64) -> Vec<usize> {
    assert!(radius > T::zero(), "radius must be positive");
    let pts = cloud.points();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let cell = |p: &Vec3<T>| -> (i64, i64, i64) {
        let f = |v: T| (v / radius).floor().as_f64() as i64;
        (f(p.x), f(p.y), f(p.z))
    };
    let r2 = radius * radius;
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut kept = Vec::new();
    for i in order {
        let p = &pts[i];
        let (cx, cy, cz) = cell(p);
        let mut ok = true;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        if bucket.iter().any(|&j| (pts[j] - p).norm_squared() < r2) {
                            ok = false;
                            break 'search;
                        }
                    }
                }
            }
        }
        if ok {
            grid.entry((cx, cy, cz)).or_default().push(i);
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

pub fn poisson_disc_sample<T: Scalar>(cloud: &PointCloud<T>, radius: T, seed: u64) -> PointCloud<T> {
    if cloud.is_empty() {
        return cloud.clone();
    }
    cloud.select(&poisson_disc_indices(cloud, radius, seed))
}

/// Poisson-disc subset whose size is as close as possible to `target`,
/// found by bisection on the radius.
pub fn poisson_disc_sample_count<T: Scalar>(
    cloud: &PointCloud<T>,
    target: usize,
    seed: u64,
) -> PointCloud<T> {
    if cloud.len() <= target || target == 0 {
        return cloud.clone();
    }
    let mut lo = T::zero();
    let mut hi = cloud.diameter().max(T::lit(1e-9));
    let mut best: Option<Vec<usize>> = None;
    for _ in 0..40 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= T::zero() {
            break;
        }
        let idx = poisson_disc_indices(cloud, mid, seed);
        let better = match &best {
            None => true,
            Some(b) => idx.len().abs_diff(target) < b.len().abs_diff(target),
        };
        let n = idx.len();
        if better {
            best = Some(idx);
        }
        if n == target {
            break;
        }
        if n > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    cloud.select(&best.unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid10() -> PointCloud<f64> {
        PointCloud::new(
            (0..100)
                .map(|i| Vec3::new((i % 10) as f64, (i / 10) as f64, 0.0))
                .collect(),
        )
    }

    #[test]
    fn huge_radius_gives_singleton() {
        let c = grid10();
        assert_eq!(poisson_disc_sample(&c, 100.0, 1).len(), 1);
    }

    #[test]
    fn empty_input_empty_output() {
        let c = PointCloud::<f64>::new(vec![]);
        assert!(poisson_disc_sample(&c, 1.0, 0).is_empty());
    }

    #[test]
    fn grid_min_distance_and_maximality() {
        let c = grid10();
        for seed in 0..5 {
            let idx = poisson_disc_indices(&c, 2.5, seed);
            let p = c.points();
            for a in 0..idx.len() {
                for b in a + 1..idx.len() {
                    assert!((p[idx[a]] - p[idx[b]]).norm() >= 2.5);
                }
            }
            for q in p {
                assert!(idx.iter().any(|&i| (p[i] - q).norm() < 2.5));
            }
        }
    }

    #[test]
    fn count_targeting() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts: Vec<Vec3<f64>> = (0..4000)
            .map(|_| Vec3::new(rng.random_range(0.0..50.0), rng.random_range(0.0..50.0), 0.0))
            .collect();
        let c = PointCloud::new(pts);
        let s = poisson_disc_sample_count(&c, 500, 3);
        assert!(s.len().abs_diff(500) <= 10, "got {}", s.len());
    }

    #[test]
    fn deterministic_for_seed() {
        let c = grid10();
        assert_eq!(poisson_disc_indices(&c, 1.5, 9), poisson_disc_indices(&c, 1.5, 9));
    }
}
