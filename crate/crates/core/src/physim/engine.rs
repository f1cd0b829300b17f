//! Rigid-body settling on top of rapier. The world is built in the surface frame
//! (gravity along -z) and results are mapped back to world poses.

use nalgebra::{Quaternion, UnitQuaternion};
use rapier3d::math::{Pose as RPose, Rotation as RRot, Vector as RVec};
use rapier3d::prelude::*;
use serde::{Deserialize, Serialize};

use super::audit::{audit_scene, PenetrationAudit};
use super::{PhysicsParams, Scene};
use crate::geom::{Pose6D, Vec3};
use crate::models::ModelLibrary;
use crate::{Error, Result};

const GROUND_HALF_THICKNESS: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettleReport {
    pub steps: u32,
    pub settled: bool,
    pub removed: Vec<String>,
    /// Largest displacement of any surface point of any object within one step, meters.
    pub max_step_displacement: f64,
    /// Thinnest collision hull in the scene, meters.
    pub min_thickness: f64,
    pub penetration: PenetrationAudit,
}

impl SettleReport {
    /// Whether no object moved further than the thinnest hull within a single step.
    pub fn step_size_ok(&self) -> bool {
        self.max_step_displacement < self.min_thickness
    }
}

fn to_rpose(p: &Pose6D) -> RPose {
    let q = p.rotation.quaternion();
    RPose::from_parts(
        RVec::new(p.translation.x as f32, p.translation.y as f32, p.translation.z as f32),
        RRot::from_xyzw(q.i as f32, q.j as f32, q.k as f32, q.w as f32),
    )
}

fn from_rpose(p: &RPose) -> Pose6D {
    let (t, q) = (p.translation, p.rotation);
    Pose6D::new(
        UnitQuaternion::from_quaternion(Quaternion::new(q.w as f64, q.x as f64, q.y as f64, q.z as f64)),
        Vec3::new(t.x as f64, t.y as f64, t.z as f64),
    )
}

/// Per-second fractional velocity loss to rapier's `v /= 1 + dt·c` coefficient.
fn damping_coefficient(fraction: f64) -> f32 {
    -(1.0 - fraction.min(0.999)).ln() as f32
}

/// Drop the scene's objects from their current poses until they come to rest.
///
/// Objects that slide off the surface during simulation, or whose centre ends up
/// outside the surface extents, are removed and listed in the report.
pub fn settle(scene: &Scene, library: &ModelLibrary, params: &PhysicsParams) -> Result<(Scene, SettleReport)> {
    params.validate()?;
    scene.surface.validate()?;
    let surface = &scene.surface;
    let to_local = surface.pose.inverse();

    let mut world = PhysicsWorld::new();
    world.gravity = RVec::new(0.0, 0.0, -params.gravity as f32);
    {
        let ip = &mut world.integration_parameters;
        ip.dt = params.timestep as f32;
        ip.num_solver_iterations = params.solver_iterations.max(1) as usize;
        // Scale contact tolerances to tabletop objects (allowed error 0.5 mm).
        ip.length_unit = 0.1;
        // Recycled contacts go stale while a tall body rocks on a flat cap and
        // keep feeding the rocking, so contacts are regenerated every step.
        ip.contact_recycling = false;
    }

    let [dx, dy] = surface.dims.map(|d| d / 2.0);
    let ground = ColliderBuilder::cuboid(dx as f32, dy as f32, GROUND_HALF_THICKNESS as f32)
        .translation(RVec::new(0.0, 0.0, -GROUND_HALF_THICKNESS as f32))
        .friction(params.friction as f32)
        .restitution(params.restitution as f32);
    world.insert_collider(ground, None);
    if let Some(c) = &surface.container {
        let (h, t) = (c.wall_height / 2.0, c.wall_thickness / 2.0);
        let walls = [
            (dx + t, 0.0, t, dy + 2.0 * t),
            (-dx - t, 0.0, t, dy + 2.0 * t),
            (0.0, dy + t, dx, t),
            (0.0, -dy - t, dx, t),
        ];
        for (x, y, hx, hy) in walls {
            let wall = ColliderBuilder::cuboid(hx as f32, hy as f32, h as f32)
                .translation(RVec::new(x as f32, y as f32, h as f32))
                .friction(params.friction as f32);
            world.insert_collider(wall, None);
        }
    }

    let lin = damping_coefficient(params.linear_damping);
    let ang = damping_coefficient(params.angular_damping);
    let mut bodies = Vec::with_capacity(scene.placements.len());
    let mut min_thickness = f64::INFINITY;
    for p in &scene.placements {
        let model = library.get(&p.object_id)?;
        min_thickness = min_thickness.min(model.hull.min_width());
        let pts: Vec<RVec> = model
            .hull
            .vertices
            .iter()
            .map(|v| RVec::new(v.x as f32, v.y as f32, v.z as f32))
            .collect();
        let collider = ColliderBuilder::convex_mesh(pts, &model.hull.triangles)
            .ok_or_else(|| Error::Degenerate(format!("collision hull of `{}`", p.object_id)))?
            .friction(params.friction as f32)
            .restitution(params.restitution as f32)
            .mass(params.mass as f32);
        let body = RigidBodyBuilder::dynamic()
            .pose(to_rpose(&to_local.compose(&p.pose)))
            .linear_damping(lin)
            .angular_damping(ang);
        let (h, _) = world.insert(body, collider);
        bodies.push(Some((h, model.radius)));
    }

    let mut removed = Vec::new();
    let mut calm_steps = 0u32;
    let mut steps = 0u32;
    let mut max_disp: f64 = 0.0;
    let mut prev: Vec<Option<Pose6D>> = bodies
        .iter()
        .map(|b| b.map(|(h, _)| from_rpose(world.bodies[h].position())))
        .collect();
    while steps < params.max_steps && calm_steps < params.settle_window {
        world.step();
        steps += 1;
        let mut calm = true;
        for (i, slot) in bodies.iter_mut().enumerate() {
            let Some((h, radius)) = *slot else { continue };
            let rb = &world.bodies[h];
            let pose = from_rpose(rb.position());
            if pose.translation.z < -(radius + 0.01) || !pose.is_finite() {
                world.remove_body(h);
                *slot = None;
                prev[i] = None;
                removed.push(scene.placements[i].object_id.clone());
                continue;
            }
            if let Some(q) = &prev[i] {
                let angle = q.rotation.angle_to(&pose.rotation);
                max_disp = max_disp.max((pose.translation - q.translation).norm() + angle * radius);
            }
            prev[i] = Some(pose);
            if rb.linvel().length() as f64 >= params.settle_speed
                || rb.angvel().length() as f64 >= params.settle_angular_speed
            {
                calm = false;
            }
        }
        calm_steps = if calm { calm_steps + 1 } else { 0 };
    }
    let settled = calm_steps >= params.settle_window;

    let mut out = scene.clone();
    out.placements.clear();
    out.settled = settled;
    for (i, slot) in bodies.iter().enumerate() {
        let src = &scene.placements[i];
        let Some((h, _)) = *slot else { continue };
        let rb = &world.bodies[h];
        let pose = surface.pose.compose(&from_rpose(rb.position()));
        if !surface.contains_xy(&pose.translation, 0.0) {
            removed.push(src.object_id.clone());
            continue;
        }
        let calm = (rb.linvel().length() as f64) < params.settle_speed
            && (rb.angvel().length() as f64) < params.settle_angular_speed;
        out.placements.push(super::Placement {
            object_id: src.object_id.clone(),
            pose,
            settled: calm,
        });
    }
    out.removed.extend(removed.iter().cloned());
    let penetration = audit_scene(&out, library)?;
    let report = SettleReport {
        steps,
        settled,
        removed,
        max_step_displacement: max_disp,
        min_thickness,
        penetration,
    };
    Ok((out, report))
}
