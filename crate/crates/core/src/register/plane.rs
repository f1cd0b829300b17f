use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pca::principal_axes;
use crate::geom::Vec3;
use crate::{rng, Error, Result};

/// Points `x` with `normal · x = offset`; `normal` is unit length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn distance(&self, p: &Vec3) -> f64 {
        (self.normal.dot(p) - self.offset).abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneFit {
    pub plane: Plane,
    pub inliers: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub iterations: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            iterations: 200,
            threshold: 0.005,
            seed: 0,
        }
    }
}

fn inliers(points: &[Vec3], plane: &Plane, threshold: f64) -> Vec<usize> {
    (0..points.len()).filter(|&i| plane.distance(&points[i]) <= threshold).collect()
}

/// Plane with the most inliers among 3-point hypotheses, refit to its inliers
/// by least squares.
pub fn ransac_plane(points: &[Vec3], params: &RansacParams) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("plane fit needs >= 3 points, got {}", points.len())));
    }
    let mut r = rng::stream(params.seed, &[rng::hash_str("ransac_plane")]);
    let mut best: Option<(Plane, usize)> = None;
    for _ in 0..params.iterations {
        let [a, b, c] = [0; 3].map(|_| points[r.random_range(0..points.len())]);
        let n = (b - a).cross(&(c - a));
        let scale = (b - a).norm() * (c - a).norm();
        if !(n.norm() > 1e-9 * scale) {
            continue;
        }
        let normal = n.normalize();
        let plane = Plane {
            normal,
            offset: normal.dot(&a),
        };
        let count = inliers(points, &plane, params.threshold).len();
        if best.map_or(true, |(_, c)| count > c) {
            best = Some((plane, count));
        }
    }
    let (plane, _) = best.ok_or_else(|| Error::Degenerate("every plane hypothesis was collinear".into()))?;
    let idx = inliers(points, &plane, params.threshold);
    let support: Vec<Vec3> = idx.iter().map(|&i| points[i]).collect();
    let refit = match principal_axes(&support) {
        Ok((c, axes, _)) => {
            let mut normal: Vec3 = axes.column(2).into();
            if normal.dot(&plane.normal) < 0.0 {
                normal = -normal;
            }
            Plane {
                normal,
                offset: normal.dot(&c),
            }
        }
        Err(_) => plane,
    };
    Ok(PlaneFit {
        inliers: inliers(points, &refit, params.threshold),
        plane: refit,
    })
}
