use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::index::GridIndex;
use super::{Frame, PointCloud};
use crate::geom::{BBox2D, Camera, Vec3};
use crate::physim::SurfaceSpec;
use crate::{Error, Result};

/// Points of every valid depth pixel inside `bbox`, in the world frame.
pub fn backproject(depth: &[f32], bbox: &BBox2D, cam: &Camera) -> PointCloud {
    let (w, h) = (cam.width(), cam.height());
    let mut points = Vec::new();
    if let Some(b) = bbox.clip(w, h) {
        for v in b.y_min..b.y_max {
            for u in b.x_min..b.x_max {
                let z = depth[(v as u32 * w + u as u32) as usize];
                if z > 0.0 && z.is_finite() {
                    points.push(cam.backproject(u as f64, v as f64, z as f64));
                }
            }
        }
    }
    PointCloud {
        points,
        frame: Frame::World,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanParams {
    /// Points at or below this height above the surface are dropped (the surface itself).
    pub min_height: f64,
    pub max_height: f64,
    pub knn_k: usize,
    /// Outlier cut: mean k-NN distance above `mean + knn_sigma · std`.
    pub knn_sigma: f64,
    /// Outliers must also have a mean k-NN distance above this, meters.
    pub knn_floor: f64,
    pub cell: f64,
    /// When set, keep only the largest group of points connected within this radius.
    pub cluster_radius: Option<f64>,
}

impl Default for CleanParams {
    fn default() -> Self {
        CleanParams {
            min_height: 0.004,
            max_height: 0.3,
            knn_k: 8,
            knn_sigma: 2.0,
            knn_floor: 0.015,
            cell: 0.005,
            cluster_radius: Some(0.015),
        }
    }
}

/// Keep points above the surface, within its extents and below `max_height`.
pub fn crop(points: &[Vec3], surface: &SurfaceSpec, min_height: f64, max_height: f64) -> Vec<Vec3> {
    points
        .iter()
        .filter(|p| {
            let h = surface.height_of(p);
            h > min_height && h <= max_height && surface.contains_xy(p, 0.0)
        })
        .copied()
        .collect()
}

/// One point per occupied `cell`-sized voxel: the centroid of the points in it.
pub fn grid_filter(points: &[Vec3], cell: f64) -> Vec<Vec3> {
    let mut cells: BTreeMap<[i64; 3], (Vec3, usize)> = BTreeMap::new();
    for p in points {
        let k = [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64];
        let e = cells.entry(k).or_insert((Vec3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }
    cells.into_values().map(|(s, n)| if n == 1 { s } else { s / n as f64 }).collect()
}

/// One pass of statistical outlier removal; returns the kept points.
pub fn remove_outliers(points: &[Vec3], k: usize, sigma: f64, floor: f64) -> Vec<Vec3> {
    if points.len() < 2 || k == 0 {
        return points.to_vec();
    }
    let idx = GridIndex::new(points, floor.max(1e-4));
    let mean_d: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = idx.knn(p, k, Some(i));
            nn.iter().map(|x| x.1).sum::<f64>() / nn.len() as f64
        })
        .collect();
    let n = mean_d.len() as f64;
    let mu = mean_d.iter().sum::<f64>() / n;
    let sd = (mean_d.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n).sqrt();
    let cut = (mu + sigma * sd).max(floor);
    points.iter().zip(&mean_d).filter(|(_, &d)| d <= cut).map(|(p, _)| *p).collect()
}

/// Largest connected component under the `radius` neighbourhood relation.
pub fn largest_cluster(points: &[Vec3], radius: f64) -> Vec<Vec3> {
    if points.is_empty() {
        return Vec::new();
    }
    let idx = GridIndex::new(points, radius);
    let mut label = vec![usize::MAX; points.len()];
    let mut sizes = Vec::new();
    for seed in 0..points.len() {
        if label[seed] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut stack = vec![seed];
        label[seed] = id;
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            for j in idx.within(&points[i], radius) {
                if label[j] == usize::MAX {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        sizes.push(size);
    }
    // First of the largest, so ties resolve by point order.
    let best = (0..sizes.len()).fold(0, |b, i| if sizes[i] > sizes[b] { i } else { b });
    points.iter().zip(&label).filter(|(_, &l)| l == best).map(|(p, _)| *p).collect()
}

/// Crop to the surface, grid-filter, then repeat outlier removal (and optional
/// clustering) until nothing more is removed. Running it twice changes nothing.
pub fn clean_cloud(cloud: &PointCloud, surface: &SurfaceSpec, params: &CleanParams) -> Result<PointCloud> {
    if cloud.frame != Frame::World {
        return Err(Error::invalid("point cloud", "cleaning needs a world-frame cloud"));
    }
    if !(params.cell > 0.0) {
        return Err(Error::invalid("clean params", "cell must be positive"));
    }
    let cropped = crop(&cloud.points, surface, params.min_height, params.max_height);
    let mut pts = grid_filter(&cropped, params.cell);
    loop {
        let before = pts.len();
        pts = remove_outliers(&pts, params.knn_k, params.knn_sigma, params.knn_floor);
        if let Some(r) = params.cluster_radius {
            pts = largest_cluster(&pts, r);
        }
        if pts.len() == before {
            break;
        }
    }
    if pts.is_empty() {
        return Err(Error::SegmentTooSmall { points: 0 });
    }
    Ok(PointCloud {
        points: pts,
        frame: Frame::World,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Intrinsics, Pose6D};
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn world(points: Vec<Vec3>) -> PointCloud {
        PointCloud {
            points,
            frame: Frame::World,
        }
    }

    #[test]
    fn principal_pixel_backprojects_onto_axis() {
        let cam = Camera::new(Intrinsics::centered(64, 48, 50.0), Pose6D::identity());
        let k = &cam.intrinsics;
        let mut depth = vec![0f32; 64 * 48];
        depth[(k.cy as usize) * 64 + k.cx as usize] = 1.0;
        let c = backproject(&depth, &BBox2D::new(0, 0, 64, 48).unwrap(), &cam);
        assert_eq!(c.points, vec![Vec3::new(0.0, 0.0, 1.0)]);
    }

    #[test]
    fn one_point_per_valid_pixel_and_round_trip() {
        let cam = Camera::look_at(Intrinsics::centered(64, 48, 50.0), Vec3::new(0.3, 0.1, 0.8), Vec3::zeros(), Vec3::z()).unwrap();
        let depth = vec![0.7f32; 64 * 48];
        let b = BBox2D::new(10, 5, 20, 15).unwrap();
        let c = backproject(&depth, &b, &cam);
        assert_eq!(c.points.len(), 100);
        let mut k = 0;
        for v in 5..15 {
            for u in 10..20 {
                let [pu, pv] = cam.project_point(&c.points[k]).unwrap();
                assert!((pu - u as f64).abs() < 0.5 && (pv - v as f64).abs() < 0.5);
                k += 1;
            }
        }
        let empty = backproject(&vec![0.0; 64 * 48], &b, &cam);
        assert!(empty.points.is_empty());
    }

    #[test]
    fn crop_removes_points_off_the_surface() {
        let s = SurfaceSpec::default();
        let pts = vec![Vec3::new(0.0, 0.0, 0.02), Vec3::new(0.8, 0.0, 0.02), Vec3::new(0.0, 0.0, 0.0)];
        assert_eq!(crop(&pts, &s, 0.004, 0.3), vec![Vec3::new(0.0, 0.0, 0.02)]);
    }

    #[test]
    fn isolated_point_is_an_outlier() {
        // 3 x 3 x 3 lattice at 5 mm: mean 8-NN distance is at most 7.1 mm for every
        // lattice point; the stray point 10 cm away sits ~10 cm from all of them.
        let mut pts = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    pts.push(Vec3::new(i as f64, j as f64, k as f64) * 0.005);
                }
            }
        }
        let stray = Vec3::new(0.105, 0.005, 0.005);
        pts.push(stray);
        let kept = remove_outliers(&pts, 8, 2.0, 0.0);
        assert_eq!(kept.len(), 27);
        assert!(!kept.contains(&stray));
    }

    #[test]
    fn grid_merges_to_centroid() {
        let pts = vec![Vec3::new(0.001, 0.001, 0.001), Vec3::new(0.003, 0.002, 0.004)];
        let out = grid_filter(&pts, 0.005);
        assert_eq!(out.len(), 1);
        assert!((out[0] - Vec3::new(0.002, 0.0015, 0.0025)).norm() < 1e-15);
    }

    #[test]
    fn empty_result_is_too_small() {
        let s = SurfaceSpec::default();
        let c = world(vec![Vec3::new(5.0, 0.0, 0.1)]);
        assert!(matches!(clean_cloud(&c, &s, &CleanParams::default()), Err(Error::SegmentTooSmall { .. })));
    }

    #[test]
    fn cluster_keeps_the_larger_group() {
        let mut pts: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64 * 0.004, 0.0, 0.0)).collect();
        pts.extend((0..5).map(|i| Vec3::new(0.5 + i as f64 * 0.004, 0.0, 0.0)));
        assert_eq!(largest_cluster(&pts, 0.01).len(), 20);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn cleaning_is_idempotent(seed in 0u64..10_000, n in 50usize..400) {
            let mut r = rng::seeded(seed);
            let s = SurfaceSpec::default();
            let mut pts: Vec<Vec3> = (0..n)
                .map(|_| Vec3::new(r.random_range(-0.05..0.05), r.random_range(-0.05..0.05), r.random_range(0.0..0.06)))
                .collect();
            for _ in 0..n / 20 {
                pts.push(Vec3::new(r.random_range(-0.35..0.35), r.random_range(-0.25..0.25), r.random_range(-0.01..0.4)));
            }
            let p = CleanParams::default();
            if let Ok(once) = clean_cloud(&world(pts), &s, &p) {
                let twice = clean_cloud(&once, &s, &p).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
