//! Uniform-grid nearest-neighbor index over a static point set.

use alloc::vec;
use alloc::vec::Vec;

use crate::Vec3;

#[derive(Clone, Debug)]
pub struct PointGrid {
    points: Vec<Vec3>,
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    ids: Vec<u32>,
}

impl PointGrid {
    /// Builds an index with roughly two points per occupied cell.
    pub fn new(points: Vec<Vec3>) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if points.is_empty() {
            lo = Vec3::zeros();
            hi = Vec3::zeros();
        }
        let extent = hi - lo;
        let n = points.len().max(1) as f64;
        // cell size from the bounding area (surfaces) rather than volume
        let area = 2.0 * (extent.x * extent.y + extent.y * extent.z + extent.x * extent.z);
        let mut cell = libm::sqrt(area.max(1e-18) / n * 2.0);
        let max_extent = extent.max();
        if max_extent > 0.0 {
            cell = cell.max(max_extent / 512.0);
        } else {
            cell = 1.0;
        }
        let dims = [0, 1, 2].map(|k| ((extent[k] / cell) as usize + 1).min(1 << 20));
        let mut grid = Self {
            points,
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            ids: Vec::new(),
        };
        let cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; cells + 1];
        let keys: Vec<usize> = grid.points.iter().map(|p| grid.key(grid.cell_of(p))).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut ids = vec![0u32; keys.len()];
        for (i, &k) in keys.iter().enumerate() {
            ids[fill[k]] = i as u32;
            fill[k] += 1;
        }
        grid.starts = counts;
        grid.ids = ids;
        grid
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let c = libm::floor((p[k] - self.origin[k]) / self.cell);
            if c <= 0.0 {
                0
            } else {
                (c as usize).min(self.dims[k] - 1)
            }
        })
    }

    fn key(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Visits the cells at Chebyshev distance exactly `r` from `center`.
    fn ring(&self, center: [usize; 3], r: usize, mut visit: impl FnMut(u32)) {
        let r = r as isize;
        let range = |k: usize| {
            let c = center[k] as isize;
            ((c - r).max(0), (c + r).min(self.dims[k] as isize - 1))
        };
        let (x0, x1) = range(0);
        let (y0, y1) = range(1);
        let (z0, z1) = range(2);
        let c = center.map(|v| v as isize);
        for z in z0..=z1 {
            for y in y0..=y1 {
                let on_shell_yz = (z - c[2]).abs() == r || (y - c[1]).abs() == r;
                let mut x = x0;
                while x <= x1 {
                    if on_shell_yz || (x - c[0]).abs() == r {
                        let k = self.key([x as usize, y as usize, z as usize]);
                        for &id in &self.ids[self.starts[k]..self.starts[k + 1]] {
                            visit(id);
                        }
                        x += 1;
                    } else {
                        // skip the interior straight to the far face
                        x = c[0] + r;
                    }
                }
            }
        }
    }

    fn max_ring(&self) -> usize {
        self.dims.iter().copied().max().unwrap_or(1)
    }

    /// Nearest point and its distance; equal distances resolve to the lower index.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let center = self.cell_of(q);
        let mut best = (usize::MAX, f64::INFINITY);
        for r in 0..=self.max_ring() {
            self.ring(center, r, |id| {
                let d = (self.points[id as usize] - q).norm();
                if d < best.1 || (d == best.1 && (id as usize) < best.0) {
                    best = (id as usize, d);
                }
            });
            if best.1 < r as f64 * self.cell {
                break;
            }
        }
        Some(best)
    }

    /// Up to `k` nearest points sorted by distance, optionally skipping one index.
    pub fn k_nearest(&self, q: &Vec3, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k == 0 {
            return best;
        }
        let center = self.cell_of(q);
        for r in 0..=self.max_ring() {
            self.ring(center, r, |id| {
                let id = id as usize;
                if Some(id) == exclude {
                    return;
                }
                let d = (self.points[id] - q).norm();
                if best.len() == k && d >= best[k - 1].1 {
                    return;
                }
                let pos = best.partition_point(|&(i, e)| e < d || (e == d && i < id));
                best.insert(pos, (id, d));
                best.truncate(k);
            });
            if best.len() == k && best[k - 1].1 < r as f64 * self.cell {
                break;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    fn cloud(seed: u64, n: usize) -> Vec<Vec3> {
        let mut rng = rng_for(seed, "grid");
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5), rng.random_range(0.0..0.1)))
            .collect()
    }

    #[test]
    fn nearest_matches_brute_force() {
        let pts = cloud(1, 1000);
        let grid = PointGrid::new(pts.clone());
        for q in cloud(2, 300).iter().chain(&[Vec3::new(5.0, 5.0, 5.0), Vec3::new(-3.0, 0.0, 0.0)]) {
            let (i, d) = grid.nearest(q).unwrap();
            let bd = pts.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
            assert_eq!(d, bd);
            assert_eq!((pts[i] - q).norm(), bd);
        }
    }

    #[test]
    fn k_nearest_matches_brute_force() {
        let pts = cloud(3, 500);
        let grid = PointGrid::new(pts.clone());
        for (qi, q) in pts.iter().enumerate().step_by(13) {
            let got = grid.k_nearest(q, 3, Some(qi));
            let mut all: Vec<(usize, f64)> = pts.iter().enumerate().filter(|(i, _)| *i != qi).map(|(i, p)| (i, (p - q).norm())).collect();
            all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            assert_eq!(got, all[..3].to_vec());
        }
    }

    #[test]
    fn degenerate_sets() {
        assert!(PointGrid::new(Vec::new()).nearest(&Vec3::zeros()).is_none());
        let g = PointGrid::new(vec![Vec3::new(1.0, 2.0, 3.0); 4]);
        assert_eq!(g.nearest(&Vec3::zeros()).unwrap().0, 0);
        assert_eq!(g.k_nearest(&Vec3::zeros(), 10, None).len(), 4);
    }
}
