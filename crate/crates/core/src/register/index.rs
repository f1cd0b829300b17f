use std::collections::HashMap;

use crate::geom::Vec3;

/// Uniform-grid spatial hash over a fixed point set. Queries are exact: the grid
/// only prunes cells that cannot contain an answer.
#[derive(Clone, Debug)]
pub struct GridIndex {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
    points: Vec<Vec3>,
}

impl GridIndex {
    pub fn new(points: &[Vec3], cell: f64) -> Self {
        assert!(cell > 0.0, "grid cell must be positive");
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key_of(cell, p)).or_default().push(i as u32);
        }
        GridIndex {
            cell,
            cells,
            points: points.to_vec(),
        }
    }

    fn key_of(cell: f64, p: &Vec3) -> [i64; 3] {
        [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64]
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

    /// Visit the points of the cells at Chebyshev distance exactly `r` from `c`.
    fn for_shell(&self, c: [i64; 3], r: i64, mut f: impl FnMut(u32)) {
        let mut visit = |k: [i64; 3]| {
            if let Some(list) = self.cells.get(&k) {
                list.iter().for_each(|&i| f(i));
            }
        };
        if r == 0 {
            visit(c);
            return;
        }
        for dx in -r..=r {
            for dy in -r..=r {
                if dx.abs() == r || dy.abs() == r {
                    for dz in -r..=r {
                        visit([c[0] + dx, c[1] + dy, c[2] + dz]);
                    }
                } else {
                    visit([c[0] + dx, c[1] + dy, c[2] - r]);
                    visit([c[0] + dx, c[1] + dy, c[2] + r]);
                }
            }
        }
    }

    /// Whether walking shells out to radius `r` visits more cells than are occupied.
    fn shells_exceed_cells(&self, r: i64) -> bool {
        let side = (2 * r + 1) as f64;
        side * side * side > self.cells.len() as f64
    }

    fn brute_nearest(&self, q: &Vec3, cutoff: f64) -> Option<(usize, f64)> {
        let c2 = cutoff * cutoff;
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            let d2 = (p - q).norm_squared();
            if d2 <= c2 && best.map_or(true, |(_, b)| d2 < b) {
                best = Some((i, d2));
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    /// Nearest point within `cutoff` (inclusive) as `(index, distance)`.
    pub fn nearest_within(&self, q: &Vec3, cutoff: f64) -> Option<(usize, f64)> {
        let c = Self::key_of(self.cell, q);
        let rings = (cutoff / self.cell).ceil().min(1e9) as i64;
        let mut best: Option<(usize, f64)> = None;
        let c2 = cutoff * cutoff;
        for r in 0..=rings {
            if self.shells_exceed_cells(r) {
                return self.brute_nearest(q, cutoff);
            }
            self.for_shell(c, r, |i| {
                let d2 = (self.points[i as usize] - q).norm_squared();
                if d2 <= c2 && best.map_or(true, |(_, b)| d2 < b) {
                    best = Some((i as usize, d2));
                }
            });
            // Anything in shell r + 1 or beyond is further than r · cell.
            if let Some((_, b)) = best {
                if b <= (r as f64 * self.cell).powi(2) {
                    break;
                }
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }

    pub fn has_neighbor_within(&self, q: &Vec3, radius: f64) -> bool {
        self.nearest_within(q, radius).is_some()
    }

    /// Indices of all points within `radius` of `q`.
    pub fn within(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        let c = Self::key_of(self.cell, q);
        let rings = (radius / self.cell).ceil().min(1e9) as i64;
        let r2 = radius * radius;
        if self.shells_exceed_cells(rings) {
            return (0..self.points.len()).filter(|&i| (self.points[i] - q).norm_squared() <= r2).collect();
        }
        let mut out = Vec::new();
        for r in 0..=rings {
            self.for_shell(c, r, |i| {
                if (self.points[i as usize] - q).norm_squared() <= r2 {
                    out.push(i as usize);
                }
            });
        }
        out
    }

    /// The `k` nearest points to `q` other than index `skip`, sorted by distance.
    pub fn knn(&self, q: &Vec3, k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
        let avail = self.points.len() - usize::from(skip.is_some());
        let k = k.min(avail);
        if k == 0 {
            return Vec::new();
        }
        let c = Self::key_of(self.cell, q);
        let mut found: Vec<(usize, f64)> = Vec::new();
        let mut r = 0;
        loop {
            if self.shells_exceed_cells(r) {
                let mut all: Vec<(usize, f64)> = (0..self.points.len())
                    .filter(|&i| Some(i) != skip)
                    .map(|i| (i, (self.points[i] - q).norm()))
                    .collect();
                all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                all.truncate(k);
                return all;
            }
            self.for_shell(c, r, |i| {
                if Some(i as usize) != skip {
                    found.push((i as usize, (self.points[i as usize] - q).norm()));
                }
            });
            if found.len() >= k {
                found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                if found[k - 1].1 <= r as f64 * self.cell || found.len() == avail {
                    found.truncate(k);
                    return found;
                }
            }
            r += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut r = rng::seeded(seed);
        (0..n)
            .map(|_| Vec3::new(r.random_range(-0.1..0.1), r.random_range(-0.1..0.1), r.random_range(-0.05..0.05)))
            .collect()
    }

    #[test]
    fn nearest_matches_brute_force() {
        let pts = cloud(500, 1);
        let idx = GridIndex::new(&pts, 0.007);
        let queries = cloud(300, 2);
        for q in &queries {
            let brute = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            for cutoff in [0.005, 0.02, 1.0] {
                let got = idx.nearest_within(q, cutoff);
                if brute.1 <= cutoff {
                    let (i, d) = got.unwrap();
                    assert!((d - brute.1).abs() < 1e-15, "{i} vs {}", brute.0);
                } else {
                    assert!(got.is_none());
                }
            }
        }
    }

    #[test]
    fn knn_and_radius_match_brute_force() {
        let pts = cloud(400, 3);
        let idx = GridIndex::new(&pts, 0.01);
        for (qi, q) in pts.iter().enumerate().take(50) {
            let mut brute: Vec<(usize, f64)> = pts
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != qi)
                .map(|(i, p)| (i, (p - q).norm()))
                .collect();
            brute.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let got = idx.knn(q, 8, Some(qi));
            assert_eq!(got.len(), 8);
            for (g, b) in got.iter().zip(&brute) {
                assert!((g.1 - b.1).abs() < 1e-15);
            }
            let mut w = idx.within(q, 0.03);
            w.sort_unstable();
            let mut bw: Vec<usize> = pts.iter().enumerate().filter(|(_, p)| (*p - q).norm() <= 0.03).map(|(i, _)| i).collect();
            bw.sort_unstable();
            assert_eq!(w, bw);
        }
        assert_eq!(GridIndex::new(&pts[..3], 0.01).knn(&pts[0], 8, Some(0)).len(), 2);
    }
}
