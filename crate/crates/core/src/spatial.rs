//! Uniform-grid spatial hash with exact k-nearest-neighbor queries.

use std::collections::HashMap;

use crate::geometry::{dist2, Aabb, Vec3};

/// Cells per longest bounding-box axis used when no explicit cell size is given.
pub const DEFAULT_CELLS_PER_AXIS: f64 = 32.0;

pub struct SpatialHash<'a> {
    points: &'a [Vec3],
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
    key_min: [i64; 3],
    key_max: [i64; 3],
}

impl<'a> SpatialHash<'a> {
    /// Builds a hash whose cell edge is 1/32 of the longest bounding-box extent
    /// (1/32 exactly for a normalized cloud).
    pub fn new(points: &'a [Vec3]) -> Self {
        let cell = Aabb::from_points(points)
            .map(|b| b.longest_extent() / DEFAULT_CELLS_PER_AXIS)
            .filter(|c| *c > 0.0)
            .unwrap_or(1.0);
        Self::with_cell_size(points, cell)
    }

    pub fn with_cell_size(points: &'a [Vec3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let mut key_min = [i64::MAX; 3];
        let mut key_max = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let key = key_of(*p, cell);
            for a in 0..3 {
                key_min[a] = key_min[a].min(key[a]);
                key_max[a] = key_max[a].max(key[a]);
            }
            buckets.entry(key).or_default().push(i);
        }
        SpatialHash {
            points,
            cell,
            buckets,
            key_min,
            key_max,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `query` as `(index, squared distance)`, closest
    /// first. Ties are broken by lower index. Returns fewer than `k` entries only
    /// when the hash holds fewer points.
    pub fn knn(&self, query: Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k == 0 || self.points.is_empty() {
            return best;
        }
        let qk = key_of(query, self.cell);
        // Chebyshev ring radius beyond which no occupied cell exists.
        let max_ring = (0..3)
            .map(|a| (qk[a] - self.key_min[a]).abs().max((self.key_max[a] - qk[a]).abs()))
            .max()
            .unwrap_or(0);

        // Chebyshev ring radius of the nearest occupied cell's box.
        let min_ring = (0..3)
            .map(|a| (self.key_min[a] - qk[a]).max(qk[a] - self.key_max[a]).max(0))
            .max()
            .unwrap_or(0);

        for r in min_ring..=max_ring {
            self.visit_ring(qk, r, |idx| {
                let d = dist2(self.points[idx], query);
                insert_sorted(&mut best, k, idx, d);
            });
            // Every unvisited point lies at least r cells away.
            if best.len() == k {
                let bound = r as f64 * self.cell;
                if best[k - 1].1 <= bound * bound {
                    break;
                }
            }
        }
        best
    }

    /// Nearest point to `query` as `(index, distance)`.
    pub fn nearest(&self, query: Vec3) -> Option<(usize, f64)> {
        self.knn(query, 1).first().map(|&(i, d2)| (i, d2.sqrt()))
    }

    /// Visits the cells at Chebyshev distance exactly `r` from `center`,
    /// restricted to the box of occupied keys.
    fn visit_ring(&self, center: [i64; 3], r: i64, mut f: impl FnMut(usize)) {
        let lo = |a: usize| (center[a] - r).max(self.key_min[a]);
        let hi = |a: usize| (center[a] + r).min(self.key_max[a]);
        for x in lo(0)..=hi(0) {
            for y in lo(1)..=hi(1) {
                let on_shell_xy = (x - center[0]).abs() == r || (y - center[1]).abs() == r;
                if on_shell_xy {
                    for z in lo(2)..=hi(2) {
                        self.visit_cell([x, y, z], &mut f);
                    }
                } else {
                    for z in [center[2] - r, center[2] + r] {
                        if z >= self.key_min[2] && z <= self.key_max[2] {
                            self.visit_cell([x, y, z], &mut f);
                        }
                    }
                }
            }
        }
    }

    fn visit_cell(&self, key: [i64; 3], f: &mut impl FnMut(usize)) {
        if let Some(bucket) = self.buckets.get(&key) {
            for &i in bucket {
                f(i);
            }
        }
    }
}

fn key_of(p: Vec3, cell: f64) -> [i64; 3] {
    [
        (p[0] / cell).floor() as i64,
        (p[1] / cell).floor() as i64,
        (p[2] / cell).floor() as i64,
    ]
}

fn insert_sorted(best: &mut Vec<(usize, f64)>, k: usize, idx: usize, d: f64) {
    let pos = best.partition_point(|&(i, bd)| bd < d || (bd == d && i < idx));
    if pos < k {
        best.insert(pos, (idx, d));
        best.truncate(k);
    }
}
