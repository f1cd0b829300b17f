//! Scene construction: sample an object subset and initial poses above the resting
//! surface, then settle the objects under gravity.

pub mod audit;
mod engine;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{random_rotation, Pose6D, Vec3};
use crate::models::ModelLibrary;
use crate::{rng, Error, Result};

pub use engine::{settle, SettleReport};

/// Optional axis-aligned bin walls around the surface (shelf-bin mode).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub wall_height: f64,
    #[serde(default = "default_wall_thickness")]
    pub wall_thickness: f64,
}

fn default_wall_thickness() -> f64 {
    0.01
}

fn default_drop_height() -> f64 {
    0.15
}

/// Rectangular resting surface centred on its pose; surface-frame +z is up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub pose: Pose6D,
    /// Extents along the surface x and y axes, meters.
    pub dims: [f64; 2],
    /// Height of each object's lowest point above the surface at release, meters.
    #[serde(default = "default_drop_height")]
    pub drop_height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<Container>,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        SurfaceSpec {
            pose: Pose6D::identity(),
            dims: [0.6, 0.4],
            drop_height: default_drop_height(),
            container: None,
        }
    }
}

impl SurfaceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dims[0] > 0.0 && self.dims[1] > 0.0) {
            return Err(Error::invalid("surface", "dims must be positive"));
        }
        if !(self.drop_height >= 0.0) {
            return Err(Error::invalid("surface", "drop height must be non-negative"));
        }
        if let Some(c) = &self.container {
            if !(c.wall_height > 0.0 && c.wall_thickness > 0.0) {
                return Err(Error::invalid("surface", "container walls must have positive size"));
            }
        }
        Ok(())
    }

    pub fn up(&self) -> Vec3 {
        self.pose.transform_vector(&Vec3::z())
    }

    pub fn to_local(&self, p_world: &Vec3) -> Vec3 {
        self.pose.inverse_transform_point(p_world)
    }

    /// Whether the surface-frame xy of `p_world` lies within the extents grown by `margin`.
    pub fn contains_xy(&self, p_world: &Vec3, margin: f64) -> bool {
        let p = self.to_local(p_world);
        p.x.abs() <= self.dims[0] / 2.0 + margin && p.y.abs() <= self.dims[1] / 2.0 + margin
    }

    /// Height of `p_world` above the surface plane.
    pub fn height_of(&self, p_world: &Vec3) -> f64 {
        self.to_local(p_world).z
    }
}

/// Rigid-body simulation constants shared by all objects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsParams {
    pub gravity: f64,
    pub timestep: f64,
    pub max_steps: u32,
    /// Fraction of linear velocity removed per second, in `[0, 1]`.
    pub linear_damping: f64,
    /// Fraction of angular velocity removed per second, in `[0, 1]`.
    pub angular_damping: f64,
    pub friction: f64,
    pub restitution: f64,
    pub mass: f64,
    pub settle_speed: f64,
    pub settle_angular_speed: f64,
    pub settle_window: u32,
    pub solver_iterations: u32,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            gravity: 9.81,
            timestep: 1.0 / 240.0,
            max_steps: 5000,
            linear_damping: 0.9,
            angular_damping: 0.9,
            friction: 0.5,
            restitution: 0.1,
            mass: 0.2,
            settle_speed: 1e-3,
            settle_angular_speed: 1e-2,
            settle_window: 60,
            solver_iterations: 8,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.timestep > 0.0
            && (0.0..=1.0).contains(&self.linear_damping)
            && (0.0..=1.0).contains(&self.angular_damping)
            && self.mass > 0.0
            && self.friction >= 0.0
            && (0.0..=1.0).contains(&self.restitution)
            && self.max_steps > 0
            && self.settle_speed > 0.0
            && self.settle_angular_speed > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("physics params", format!("{self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub object_id: String,
    pub pose: Pose6D,
    pub settled: bool,
}

/// A resting surface with posed objects; the unit of generation, rendering and labeling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub surface: SurfaceSpec,
    pub placements: Vec<Placement>,
    /// Objects discarded during settling because they left the surface.
    #[serde(default)]
    pub removed: Vec<String>,
    pub seed: u64,
    pub settled: bool,
}

impl Scene {
    pub fn new(id: impl Into<String>, surface: SurfaceSpec, poses: Vec<(String, Pose6D)>, seed: u64) -> Self {
        Scene {
            id: id.into(),
            surface,
            placements: poses
                .into_iter()
                .map(|(object_id, pose)| Placement {
                    object_id,
                    pose,
                    settled: false,
                })
                .collect(),
            removed: Vec::new(),
            seed,
            settled: false,
        }
    }

    pub fn object_ids(&self) -> Vec<&str> {
        self.placements.iter().map(|p| p.object_id.as_str()).collect()
    }

    pub fn pose_of(&self, id: &str) -> Option<&Pose6D> {
        self.placements.iter().find(|p| p.object_id == id).map(|p| &p.pose)
    }
}

/// Pick a uniformly sized random subset of the library and release poses for it.
///
/// Positions are uniform over the surface extents in the surface frame; each
/// object's lowest point starts `drop_height` above the surface (objects whose
/// bounding spheres would overlap an earlier one are lifted above it);
/// orientations are uniform on SO(3).
pub fn initial_random_poses<R: Rng + ?Sized>(
    library: &ModelLibrary,
    surface: &SurfaceSpec,
    count: (usize, usize),
    rng: &mut R,
) -> Result<Vec<(String, Pose6D)>> {
    if library.is_empty() {
        return Err(Error::EmptyModelSet);
    }
    surface.validate()?;
    let (lo, hi) = count;
    if lo == 0 || lo > hi || hi > library.len() {
        return Err(Error::invalid(
            "object count range",
            format!("({lo}, {hi}) not within [1, {}]", library.len()),
        ));
    }
    let ids = library.ids();
    let n = rng.random_range(lo..=hi);
    let mut chosen: Vec<usize> = sample(rng, ids.len(), n).into_vec();
    chosen.sort_unstable();
    let mut placed: Vec<(Vec3, f64)> = Vec::new();
    let mut out = Vec::with_capacity(n);
    for k in chosen {
        let model = library.get(&ids[k])?;
        let x = (rng.random::<f64>() - 0.5) * surface.dims[0];
        let y = (rng.random::<f64>() - 0.5) * surface.dims[1];
        let rotation = random_rotation(rng);
        let local_rot = Pose6D::from_rotation(rotation);
        let lowest = model.hull.min_height(&local_rot, &Vec3::z());
        let mut z = surface.drop_height - lowest;
        let r = model.radius;
        loop {
            let c = Vec3::new(x, y, z);
            let blocker = placed
                .iter()
                .filter(|(pc, pr)| (pc - c).norm() < pr + r)
                .map(|(pc, pr)| pc.z + pr + r + 1e-3)
                .fold(f64::NEG_INFINITY, f64::max);
            if blocker.is_finite() {
                z = blocker;
            } else {
                break;
            }
        }
        placed.push((Vec3::new(x, y, z), r));
        let local = Pose6D::new(rotation, Vec3::new(x, y, z));
        out.push((ids[k].clone(), surface.pose.compose(&local)));
    }
    Ok(out)
}

/// Sample, drop and settle one scene; deterministic in `seed`.
pub fn simulate_scene(
    library: &ModelLibrary,
    surface: &SurfaceSpec,
    params: &PhysicsParams,
    count: (usize, usize),
    seed: u64,
) -> Result<(Scene, SettleReport)> {
    let mut r = rng::seeded(seed);
    let poses = initial_random_poses(library, surface, count, &mut r)?;
    let scene = Scene::new(format!("{seed:016x}"), surface.clone(), poses, seed);
    settle(&scene, library, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_sizes_and_determinism() {
        let lib = ModelLibrary::builtin();
        let s = SurfaceSpec::default();
        let a = initial_random_poses(&lib, &s, (2, 4), &mut rng::seeded(5)).unwrap();
        let b = initial_random_poses(&lib, &s, (2, 4), &mut rng::seeded(5)).unwrap();
        assert_eq!(a, b);
        assert!((2..=4).contains(&a.len()));
        let mut ids: Vec<_> = a.iter().map(|p| p.0.clone()).collect();
        ids.dedup();
        assert_eq!(ids.len(), a.len());
    }

    #[test]
    fn count_range_errors() {
        let lib = ModelLibrary::builtin();
        let s = SurfaceSpec::default();
        assert!(initial_random_poses(&lib, &s, (0, 2), &mut rng::seeded(1)).is_err());
        assert!(initial_random_poses(&lib, &s, (1, 99), &mut rng::seeded(1)).is_err());
        assert!(matches!(
            initial_random_poses(&ModelLibrary::default(), &s, (1, 1), &mut rng::seeded(1)),
            Err(Error::EmptyModelSet)
        ));
    }

    #[test]
    fn placing_mode_puts_lowest_point_on_surface() {
        let lib = ModelLibrary::builtin();
        let s = SurfaceSpec {
            drop_height: 0.0,
            ..SurfaceSpec::default()
        };
        for seed in 0..50 {
            let poses = initial_random_poses(&lib, &s, (1, 1), &mut rng::seeded(seed)).unwrap();
            let (id, pose) = &poses[0];
            let h = lib.get(id).unwrap().hull.min_height(pose, &s.up());
            assert!(h.abs() < 1e-12, "{h}");
        }
    }

    #[test]
    fn positions_are_uniform_over_extents() {
        // Kolmogorov-Smirnov against U(-d/2, d/2); critical value at alpha = 0.01
        // is 1.628 / sqrt(n).
        let lib = ModelLibrary::builtin();
        let s = SurfaceSpec {
            pose: Pose6D::from_axis_angle(Vec3::z(), 0.4, Vec3::new(0.3, -0.2, 0.7)),
            ..SurfaceSpec::default()
        };
        let mut r = rng::seeded(99);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..10_000 {
            let p = initial_random_poses(&lib, &s, (1, 1), &mut r).unwrap();
            let local = s.to_local(&p[0].1.translation);
            xs.push(local.x / s.dims[0] + 0.5);
            ys.push(local.y / s.dims[1] + 0.5);
        }
        for mut v in [xs, ys] {
            v.sort_by(f64::total_cmp);
            let n = v.len() as f64;
            let d = v
                .iter()
                .enumerate()
                .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
                .fold(0.0, f64::max);
            assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
        }
    }
}
