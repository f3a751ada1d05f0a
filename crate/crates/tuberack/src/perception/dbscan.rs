//! Density-based clustering with core/border/noise semantics.
//!
//! Clusters are the connected components of core points; border points join
//! the cluster of their nearest core point, which makes the partition
//! independent of input ordering. `dbscan` uses a uniform grid index;
//! `dbscan_reference` is the naive O(n^2) oracle with the same semantics.

use super::cloud::PointCloud;
use nalgebra::Point3;
use std::collections::HashMap;

pub const NOISE: i32 = -1;

struct GridIndex {
    cell: f64,
    map: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl GridIndex {
    fn build(points: &[Point3<f64>], cell: f64) -> Self {
        let mut map: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            map.entry(Self::key(p, cell)).or_default().push(i);
        }
        GridIndex { cell, map }
    }

    fn key(p: &Point3<f64>, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    fn neighbors(&self, points: &[Point3<f64>], i: usize, eps: f64, out: &mut Vec<usize>) {
        out.clear();
        let (kx, ky, kz) = Self::key(&points[i], self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.map.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &j in bucket {
                            if (points[j] - points[i]).norm() <= eps {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn cluster_from_core(
    points: &[Point3<f64>],
    is_core: &[bool],
    core_neighbors: impl Fn(usize, &mut Vec<usize>),
) -> Vec<i32> {
    let n = points.len();
    let mut labels = vec![NOISE; n];
    // connected components over core points
    let mut next = 0i32;
    let mut stack = Vec::new();
    let mut scratch = Vec::new();
    for i in 0..n {
        if !is_core[i] || labels[i] != NOISE {
            continue;
        }
        let id = next;
        next += 1;
        labels[i] = id;
        stack.push(i);
        while let Some(cur) = stack.pop() {
            core_neighbors(cur, &mut scratch);
            for &j in &scratch {
                if is_core[j] && labels[j] == NOISE {
                    labels[j] = id;
                    stack.push(j);
                }
            }
        }
    }
    // border points: nearest core neighbor wins (ties: smaller label)
    for i in 0..n {
        if is_core[i] || labels[i] != NOISE {
            continue;
        }
        core_neighbors(i, &mut scratch);
        let mut best: Option<(f64, i32)> = None;
        for &j in &scratch {
            if !is_core[j] {
                continue;
            }
            let d = (points[j] - points[i]).norm();
            let cand = (d, labels[j]);
            best = Some(match best {
                None => cand,
                Some(b) if cand < b => cand,
                Some(b) => b,
            });
        }
        if let Some((_, id)) = best {
            labels[i] = id;
        }
    }
    labels
}

/// Grid-accelerated DBSCAN. Returns one cluster id per point, -1 for noise.
pub fn dbscan(cloud: &PointCloud, eps_mm: f64, min_pts: usize) -> Vec<i32> {
    assert!(eps_mm > 0.0 && min_pts >= 1);
    let points = &cloud.points;
    if points.is_empty() {
        return Vec::new();
    }
    let index = GridIndex::build(points, eps_mm);
    let mut scratch = Vec::new();
    let is_core: Vec<bool> = (0..points.len())
        .map(|i| {
            index.neighbors(points, i, eps_mm, &mut scratch);
            scratch.len() >= min_pts
        })
        .collect();
    cluster_from_core(points, &is_core, |i, out| index.neighbors(points, i, eps_mm, out))
}

/// Naive O(n^2) reference with identical semantics; test oracle only.
pub fn dbscan_reference(cloud: &PointCloud, eps_mm: f64, min_pts: usize) -> Vec<i32> {
    assert!(eps_mm > 0.0 && min_pts >= 1);
    let points = &cloud.points;
    let neighbors = |i: usize, out: &mut Vec<usize>| {
        out.clear();
        for j in 0..points.len() {
            if (points[j] - points[i]).norm() <= eps_mm {
                out.push(j);
            }
        }
    };
    let mut scratch = Vec::new();
    let is_core: Vec<bool> = (0..points.len())
        .map(|i| {
            neighbors(i, &mut scratch);
            scratch.len() >= min_pts
        })
        .collect();
    cluster_from_core(points, &is_core, neighbors)
}

/// Do two labelings describe the same partition (up to id permutation)?
pub fn same_partition(a: &[i32], b: &[i32]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd: HashMap<i32, i32> = HashMap::new();
    let mut bwd: HashMap<i32, i32> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == NOISE) != (y == NOISE) {
            return false;
        }
        if x == NOISE {
            continue;
        }
        if *fwd.entry(x).or_insert(y) != y || *bwd.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(rng: &mut ChaCha8Rng, center: [f64; 3], spread: f64, n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| {
                Point3::new(
                    center[0] + rng.gen_range(-spread..spread),
                    center[1] + rng.gen_range(-spread..spread),
                    center[2] + rng.gen_range(-spread..spread),
                )
            })
            .collect()
    }

    #[test]
    fn two_far_blobs_two_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = blob(&mut rng, [0.0, 0.0, 0.0], 5.0, 100);
        pts.extend(blob(&mut rng, [500.0, 0.0, 0.0], 5.0, 100));
        let labels = dbscan(&PointCloud { points: pts }, 10.0, 4);
        let ids: std::collections::HashSet<i32> =
            labels.iter().copied().filter(|&l| l != NOISE).collect();
        assert_eq!(ids.len(), 2);
        assert!(labels.iter().all(|&l| l != NOISE));
    }

    #[test]
    fn tiny_eps_all_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = blob(&mut rng, [0.0; 3], 50.0, 60);
        let labels = dbscan(&PointCloud { points: pts }, 1e-6, 2);
        assert!(labels.iter().all(|&l| l == NOISE));
    }

    #[test]
    fn matches_reference_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..30 {
            let mut pts = Vec::new();
            for _ in 0..rng.gen_range(1..5) {
                let c = [
                    rng.gen_range(-100.0..100.0),
                    rng.gen_range(-100.0..100.0),
                    rng.gen_range(-20.0..20.0),
                ];
                let spread = rng.gen_range(2.0..20.0);
                let n = rng.gen_range(10..120);
                pts.extend(blob(&mut rng, c, spread, n));
            }
            pts.truncate(500);
            let cloud = PointCloud { points: pts };
            let eps = rng.gen_range(2.0..15.0);
            let min_pts = rng.gen_range(2..8);
            let fast = dbscan(&cloud, eps, min_pts);
            let slow = dbscan_reference(&cloud, eps, min_pts);
            assert!(same_partition(&fast, &slow), "trial {trial} diverged");
        }
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pts = blob(&mut rng, [0.0; 3], 10.0, 80);
        pts.extend(blob(&mut rng, [40.0, 0.0, 0.0], 10.0, 80));
        let cloud = PointCloud { points: pts.clone() };
        let labels = dbscan(&cloud, 5.0, 4);
        // shuffle with a recorded permutation
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let shuffled = PointCloud { points: perm.iter().map(|&i| pts[i]).collect() };
        let shuffled_labels = dbscan(&shuffled, 5.0, 4);
        let unshuffled: Vec<i32> = {
            let mut out = vec![0; pts.len()];
            for (new_idx, &old_idx) in perm.iter().enumerate() {
                out[old_idx] = shuffled_labels[new_idx];
            }
            out
        };
        assert!(same_partition(&labels, &unshuffled));
    }
}
