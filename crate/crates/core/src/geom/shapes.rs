//! Procedural meshes and the builtin object catalog.
//!
//! All builders emit outward-wound (counter-clockwise seen from outside) triangles
//! centred on the axis-aligned bounding box.

use std::collections::HashMap;

use nalgebra::Vector2;

use super::{TriMesh, Vec3};

type Vec2 = Vector2<f64>;

pub const DEFAULT_ALBEDO: [f64; 3] = [0.7, 0.7, 0.7];

fn build(id: &str, vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>, albedo: [f64; 3]) -> TriMesh {
    let mut mesh = TriMesh {
        object_id: id.to_string(),
        vertices,
        triangles,
        albedo,
    };
    let (lo, hi) = mesh.aabb();
    let mid = (lo + hi) / 2.0;
    for v in &mut mesh.vertices {
        *v -= mid;
    }
    mesh
}

pub fn cuboid(id: &str, dims: [f64; 3]) -> TriMesh {
    let [hx, hy, hz] = dims.map(|d| d / 2.0);
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -hx } else { hx },
                if i & 2 == 0 { -hy } else { hy },
                if i & 4 == 0 { -hz } else { hz },
            )
        })
        .collect();
    let triangles = vec![
        [0, 2, 1],
        [1, 2, 3], // -z
        [4, 5, 6],
        [5, 7, 6], // +z
        [0, 1, 4],
        [1, 5, 4], // -y
        [2, 6, 3],
        [3, 6, 7], // +y
        [0, 4, 2],
        [2, 4, 6], // -x
        [1, 3, 5],
        [3, 7, 5], // +x
    ];
    build(id, vertices, triangles, DEFAULT_ALBEDO)
}

/// Icosahedron subdivided `subdivisions` times and projected onto the sphere.
pub fn icosphere(id: &str, radius: f64, subdivisions: u32) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a as usize] + vertices[b as usize]) / 2.0).normalize());
                vertices.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    build(id, vertices, triangles, DEFAULT_ALBEDO)
}

/// Closed cylinder along z.
pub fn cylinder(id: &str, radius: f64, height: f64, segments: u32) -> TriMesh {
    let segments = segments.max(3);
    let polygon: Vec<Vec2> = (0..segments)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / segments as f64;
            Vec2::new(radius * a.cos(), radius * a.sin())
        })
        .collect();
    extrude(id, &polygon, height)
}

/// Extrude a simple counter-clockwise polygon in the xy plane along z.
pub fn extrude(id: &str, polygon: &[Vec2], thickness: f64) -> TriMesh {
    let n = polygon.len() as u32;
    let h = thickness / 2.0;
    let mut vertices: Vec<Vec3> = polygon.iter().map(|p| Vec3::new(p.x, p.y, -h)).collect();
    vertices.extend(polygon.iter().map(|p| Vec3::new(p.x, p.y, h)));
    let cap = triangulate_polygon(polygon);
    let mut triangles = Vec::with_capacity(cap.len() * 2 + 2 * n as usize);
    for &[a, b, c] in &cap {
        triangles.push([a + n, b + n, c + n]);
        triangles.push([a, c, b]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        triangles.push([i, j, j + n]);
        triangles.push([i, j + n, i + n]);
    }
    build(id, vertices, triangles, DEFAULT_ALBEDO)
}

/// Ear-clipping triangulation of a simple counter-clockwise polygon.
pub fn triangulate_polygon(polygon: &[Vec2]) -> Vec<[u32; 3]> {
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a - o).perp(&(b - o));
    let mut idx: Vec<u32> = (0..polygon.len() as u32).collect();
    let mut out = Vec::new();
    let mut guard = 0;
    while idx.len() > 3 && guard < 10_000 {
        guard += 1;
        let m = idx.len();
        let ear = (0..m).find(|&k| {
            let (ia, ib, ic) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (a, b, c) = (polygon[ia as usize], polygon[ib as usize], polygon[ic as usize]);
            if cross(a, b, c) <= 0.0 {
                return false;
            }
            idx.iter().all(|&o| {
                if o == ia || o == ib || o == ic {
                    return true;
                }
                let p = polygon[o as usize];
                !(cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0)
            })
        });
        let Some(k) = ear else { break };
        let m = idx.len();
        out.push([idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]]);
        idx.remove(k);
    }
    if idx.len() == 3 {
        out.push([idx[0], idx[1], idx[2]]);
    }
    out
}

/// Tetrahedron through four points, wound outward.
pub fn tetrahedron(id: &str, p: [Vec3; 4]) -> TriMesh {
    let centroid = (p[0] + p[1] + p[2] + p[3]) / 4.0;
    let faces = [[0u32, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    let triangles = faces
        .iter()
        .map(|&[a, b, c]| {
            let (va, vb, vc) = (p[a as usize], p[b as usize], p[c as usize]);
            if (vb - va).cross(&(vc - va)).dot(&(va - centroid)) < 0.0 {
                [a, c, b]
            } else {
                [a, b, c]
            }
        })
        .collect();
    build(id, p.to_vec(), triangles, DEFAULT_ALBEDO)
}

fn with_albedo(mut m: TriMesh, albedo: [f64; 3]) -> TriMesh {
    m.albedo = albedo;
    m
}

fn poly(points: &[(f64, f64)]) -> Vec<Vec2> {
    points.iter().map(|&(x, y)| Vec2::new(x, y)).collect()
}

/// Objects without any proper rotational symmetry.
pub fn asymmetric_catalog() -> Vec<TriMesh> {
    vec![
        // Scalene triangle (sides 0.12 / 0.095 / 0.07) extruded 5 cm.
        with_albedo(
            extrude("wedge", &poly(&[(0.0, 0.0), (0.12, 0.0), (0.0772, 0.0554)]), 0.05),
            [0.85, 0.25, 0.2],
        ),
        // L profile with unequal arms.
        with_albedo(
            extrude(
                "lblock",
                &poly(&[
                    (0.0, 0.0),
                    (0.10, 0.0),
                    (0.10, 0.035),
                    (0.035, 0.035),
                    (0.035, 0.07),
                    (0.0, 0.07),
                ]),
                0.04,
            ),
            [0.2, 0.45, 0.85],
        ),
        // Three-step staircase profile.
        with_albedo(
            extrude(
                "step",
                &poly(&[
                    (0.0, 0.0),
                    (0.09, 0.0),
                    (0.09, 0.02),
                    (0.06, 0.02),
                    (0.06, 0.045),
                    (0.03, 0.045),
                    (0.03, 0.07),
                    (0.0, 0.07),
                ]),
                0.045,
            ),
            [0.25, 0.75, 0.3],
        ),
        with_albedo(
            tetrahedron(
                "tetra",
                [
                    Vec3::new(0.0, 0.0, 0.0),
                    Vec3::new(0.11, 0.0, 0.0),
                    Vec3::new(0.02, 0.08, 0.0),
                    Vec3::new(0.035, 0.025, 0.075),
                ],
            ),
            [0.9, 0.75, 0.2],
        ),
    ]
}

/// The default object set: the asymmetric objects plus common symmetric shapes.
pub fn builtin_catalog() -> Vec<TriMesh> {
    let mut all = asymmetric_catalog();
    all.extend([
        with_albedo(cuboid("box", [0.12, 0.08, 0.04]), [0.6, 0.4, 0.75]),
        with_albedo(cuboid("cube", [0.06, 0.06, 0.06]), [0.95, 0.5, 0.1]),
        with_albedo(cylinder("cylinder", 0.03, 0.1, 24), [0.3, 0.8, 0.8]),
        with_albedo(icosphere("sphere", 0.035, 1), [0.85, 0.85, 0.9]),
    ]);
    all
}
