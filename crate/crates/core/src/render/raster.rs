use crate::geom::{shapes, Camera, Pose6D, TriMesh, Vec3};
use crate::models::ModelLibrary;
use crate::physim::Scene;
use crate::Result;

use super::{LightConfig, RenderedView, SURFACE_ALBEDO};

const NEAR: f64 = 1e-3;

/// A world-space triangle tagged with its instance index and albedo.
#[derive(Clone, Debug)]
pub struct Triangle {
    pub world: [Vec3; 3],
    pub instance: u16,
    pub albedo: [f64; 3],
}

fn push_mesh(out: &mut Vec<Triangle>, mesh: &TriMesh, pose: &Pose6D, instance: u16, albedo: [f64; 3]) {
    let v = mesh.transformed_vertices(pose);
    for t in &mesh.triangles {
        out.push(Triangle {
            world: t.map(|i| v[i as usize]),
            instance,
            albedo,
        });
    }
}

/// All triangles of the scene: the surface (and container walls) as instance 0,
/// then placement `k` as instance `k + 1`.
pub fn scene_triangles(scene: &Scene, library: &ModelLibrary) -> Result<Vec<Triangle>> {
    let mut out = Vec::new();
    let s = &scene.surface;
    let [dx, dy] = s.dims.map(|d| d / 2.0);
    let corners = [(-dx, -dy), (dx, -dy), (dx, dy), (-dx, dy)].map(|(x, y)| s.pose.transform_point(&Vec3::new(x, y, 0.0)));
    for tri in [[0, 1, 2], [0, 2, 3]] {
        out.push(Triangle {
            world: tri.map(|i| corners[i]),
            instance: 0,
            albedo: SURFACE_ALBEDO,
        });
    }
    if let Some(c) = &s.container {
        let (h, t) = (c.wall_height, c.wall_thickness);
        let walls = [
            (dx + t / 2.0, 0.0, t, 2.0 * (dy + t)),
            (-dx - t / 2.0, 0.0, t, 2.0 * (dy + t)),
            (0.0, dy + t / 2.0, 2.0 * dx, t),
            (0.0, -dy - t / 2.0, 2.0 * dx, t),
        ];
        for (x, y, sx, sy) in walls {
            let mesh = shapes::cuboid("wall", [sx, sy, h]);
            let pose = s.pose.compose(&Pose6D::from_translation(Vec3::new(x, y, h / 2.0)));
            push_mesh(&mut out, &mesh, &pose, 0, SURFACE_ALBEDO);
        }
    }
    for (k, p) in scene.placements.iter().enumerate() {
        let mesh = &library.get(&p.object_id)?.mesh;
        push_mesh(&mut out, mesh, &p.pose, (k + 1) as u16, mesh.albedo);
    }
    Ok(out)
}

struct Buffers {
    width: usize,
    height: usize,
    z: Vec<f64>,
    tri: Vec<u32>,
}

#[derive(Clone, Copy)]
struct Projected {
    u: f64,
    v: f64,
    inv_z: f64,
}

/// Edge function evaluated with the endpoints in a canonical order so that the two
/// triangles sharing an edge see exactly opposite values.
fn edge(a: &Projected, b: &Projected, u: f64, v: f64) -> f64 {
    let swap = (b.u, b.v) < (a.u, a.v);
    let (p, q) = if swap { (b, a) } else { (a, b) };
    let e = (q.u - p.u) * (v - p.v) - (q.v - p.v) * (u - p.u);
    if swap {
        -e
    } else {
        e
    }
}

/// Top-left style tie rule: of the two directions of an edge exactly one owns it.
fn owns_edge(a: &Projected, b: &Projected) -> bool {
    let (dx, dy) = (b.u - a.u, b.v - a.v);
    dy > 0.0 || (dy == 0.0 && dx > 0.0)
}

fn clip_near(c: [Vec3; 3]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let (a, b) = (c[i], c[(i + 1) % 3]);
        let (ina, inb) = (a.z >= NEAR, b.z >= NEAR);
        if ina {
            out.push(a);
        }
        if ina != inb {
            let t = (NEAR - a.z) / (b.z - a.z);
            out.push(a + (b - a) * t);
        }
    }
    out
}

impl Buffers {
    fn new(cam: &Camera) -> Self {
        let (w, h) = (cam.width() as usize, cam.height() as usize);
        Buffers {
            width: w,
            height: h,
            z: vec![f64::INFINITY; w * h],
            tri: vec![u32::MAX; w * h],
        }
    }

    fn draw(&mut self, cam: &Camera, world: &[Vec3; 3], id: u32) {
        let k = &cam.intrinsics;
        let c = world.map(|p| cam.world_to_camera(&p));
        let poly = clip_near(c);
        if poly.len() < 3 {
            return;
        }
        let proj: Vec<Projected> = poly
            .iter()
            .map(|p| Projected {
                u: k.fx * p.x / p.z + k.cx,
                v: k.fy * p.y / p.z + k.cy,
                inv_z: 1.0 / p.z,
            })
            .collect();
        for i in 1..proj.len() - 1 {
            self.draw_projected(proj[0], proj[i], proj[i + 1], id);
        }
    }

    fn draw_projected(&mut self, p0: Projected, mut p1: Projected, mut p2: Projected, id: u32) {
        let mut area = edge(&p0, &p1, p2.u, p2.v);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        if area < 0.0 {
            std::mem::swap(&mut p1, &mut p2);
            area = -area;
        }
        let umin = p0.u.min(p1.u).min(p2.u).ceil().max(0.0);
        let umax = p0.u.max(p1.u).max(p2.u).floor().min(self.width as f64 - 1.0);
        let vmin = p0.v.min(p1.v).min(p2.v).ceil().max(0.0);
        let vmax = p0.v.max(p1.v).max(p2.v).floor().min(self.height as f64 - 1.0);
        if umin > umax || vmin > vmax {
            return;
        }
        let edges = [(p1, p2), (p2, p0), (p0, p1)];
        let owns = edges.map(|(a, b)| owns_edge(&a, &b));
        for j in vmin as usize..=vmax as usize {
            for i in umin as usize..=umax as usize {
                let (u, v) = (i as f64, j as f64);
                let mut w = [0.0; 3];
                let mut inside = true;
                for e in 0..3 {
                    w[e] = edge(&edges[e].0, &edges[e].1, u, v);
                    if w[e] < 0.0 || (w[e] == 0.0 && !owns[e]) {
                        inside = false;
                        break;
                    }
                }
                if !inside {
                    continue;
                }
                let inv_z = (w[0] * p0.inv_z + w[1] * p1.inv_z + w[2] * p2.inv_z) / area;
                let z = 1.0 / inv_z;
                let idx = j * self.width + i;
                if z < self.z[idx] {
                    self.z[idx] = z;
                    self.tri[idx] = id;
                }
            }
        }
    }
}

/// Render the scene from `cam` under `light`.
pub fn rasterize(scene: &Scene, library: &ModelLibrary, cam: &Camera, light: &LightConfig) -> Result<RenderedView> {
    cam.validate()?;
    light.validate()?;
    let tris = scene_triangles(scene, library)?;
    let mut buf = Buffers::new(cam);
    for (id, t) in tris.iter().enumerate() {
        buf.draw(cam, &t.world, id as u32);
    }
    let normals: Vec<Vec3> = tris
        .iter()
        .map(|t| {
            let [a, b, c] = t.world;
            (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_else(Vec3::zeros)
        })
        .collect();
    let eye = cam.center();
    let n = buf.width * buf.height;
    let mut rgb = vec![0u8; n * 3];
    let mut depth = vec![0f32; n];
    let mut instance = vec![0u16; n];
    for idx in 0..n {
        let t = buf.tri[idx];
        if t == u32::MAX {
            continue;
        }
        let tri = &tris[t as usize];
        let z = buf.z[idx];
        let (i, j) = ((idx % buf.width) as f64, (idx / buf.width) as f64);
        let p = cam.backproject(i, j, z);
        let mut nrm = normals[t as usize];
        if nrm.dot(&(eye - p)) < 0.0 {
            nrm = -nrm;
        }
        let c = light.shade(tri.albedo, &p, &nrm);
        for k in 0..3 {
            rgb[idx * 3 + k] = (c[k] * 255.0).round() as u8;
        }
        depth[idx] = z as f32;
        instance[idx] = tri.instance;
    }
    Ok(RenderedView {
        width: cam.width(),
        height: cam.height(),
        rgb,
        depth,
        instance,
        camera: cam.clone(),
        light: light.clone(),
    })
}

/// Pixels covered by `mesh` at `pose` when rendered alone, row-major.
pub fn object_mask(mesh: &TriMesh, pose: &Pose6D, cam: &Camera) -> Vec<bool> {
    let mut buf = Buffers::new(cam);
    let v = mesh.transformed_vertices(pose);
    for t in &mesh.triangles {
        buf.draw(cam, &t.map(|i| v[i as usize]), 0);
    }
    buf.tri.iter().map(|&t| t != u32::MAX).collect()
}
