//! Independent penetration check for settled scenes using the separating axis
//! test on the convex collision hulls.

use serde::{Deserialize, Serialize};

use super::Scene;
use crate::geom::{Pose6D, Vec3};
use crate::models::{ConvexHull, ModelLibrary};
use crate::Result;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PenetrationAudit {
    /// Deepest overlap between any two objects, meters.
    pub max_pair: f64,
    /// Deepest point of any object below the surface, meters.
    pub max_surface: f64,
}

impl PenetrationAudit {
    pub fn max(&self) -> f64 {
        self.max_pair.max(self.max_surface)
    }
}

fn project(points: &[Vec3], axis: &Vec3) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.dot(axis);
        (lo.min(d), hi.max(d))
    })
}

/// Penetration depth of two posed convex hulls: the smallest overlap over all
/// separating-axis candidates, or zero when some axis separates them.
pub fn hull_penetration(a: &ConvexHull, pa: &Pose6D, b: &ConvexHull, pb: &Pose6D) -> f64 {
    let va: Vec<Vec3> = a.vertices.iter().map(|v| pa.transform_point(v)).collect();
    let vb: Vec<Vec3> = b.vertices.iter().map(|v| pb.transform_point(v)).collect();
    let ea: Vec<Vec3> = a.edge_directions.iter().map(|e| pa.transform_vector(e)).collect();
    let eb: Vec<Vec3> = b.edge_directions.iter().map(|e| pb.transform_vector(e)).collect();
    let mut depth = f64::INFINITY;
    let mut test = |axis: Vec3| -> bool {
        let (alo, ahi) = project(&va, &axis);
        let (blo, bhi) = project(&vb, &axis);
        let overlap = (ahi - blo).min(bhi - alo);
        depth = depth.min(overlap);
        overlap <= 0.0
    };
    for n in &a.face_normals {
        if test(pa.transform_vector(n)) {
            return 0.0;
        }
    }
    for n in &b.face_normals {
        if test(pb.transform_vector(n)) {
            return 0.0;
        }
    }
    for u in &ea {
        for v in &eb {
            let c = u.cross(v);
            let n = c.norm();
            if n > 1e-9 && test(c / n) {
                return 0.0;
            }
        }
    }
    depth.max(0.0)
}

/// Depth of the lowest hull point below the plane through the origin with normal `up`.
pub fn surface_penetration(hull: &ConvexHull, pose: &Pose6D, up: &Vec3) -> f64 {
    (-hull.min_height(pose, up)).max(0.0)
}

pub fn audit_scene(scene: &Scene, library: &ModelLibrary) -> Result<PenetrationAudit> {
    let up = Vec3::z();
    let local = scene.surface.pose.inverse();
    let mut posed = Vec::with_capacity(scene.placements.len());
    for p in &scene.placements {
        let m = library.get(&p.object_id)?;
        posed.push((m, local.compose(&p.pose)));
    }
    let mut audit = PenetrationAudit::default();
    for (i, (ma, pa)) in posed.iter().enumerate() {
        audit.max_surface = audit.max_surface.max(surface_penetration(&ma.hull, pa, &up));
        for (mb, pb) in &posed[i + 1..] {
            if (pa.translation - pb.translation).norm() > ma.radius + mb.radius {
                continue;
            }
            audit.max_pair = audit.max_pair.max(hull_penetration(&ma.hull, pa, &mb.hull, pb));
        }
    }
    Ok(audit)
}
