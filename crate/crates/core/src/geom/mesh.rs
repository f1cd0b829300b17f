use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Pose6D, Vec3};
use crate::{Error, Result};

/// Indexed triangle mesh in meters, object frame, with a flat albedo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub object_id: String,
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub albedo: [f64; 3],
}

impl TriMesh {
    pub fn new(
        object_id: impl Into<String>,
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        albedo: [f64; 3],
    ) -> Result<Self> {
        let mesh = TriMesh {
            object_id: object_id.into(),
            vertices,
            triangles,
            albedo,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::invalid(
                "mesh",
                format!("`{}`: triangle {t:?} indexes past {n} vertices", self.object_id),
            ));
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("mesh", format!("`{}`: non-finite vertex", self.object_id)));
        }
        if self.albedo.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("mesh", format!("`{}`: albedo outside [0, 1]", self.object_id)));
        }
        Ok(())
    }

    /// Physics needs a solid: at least four vertices spanning a volume.
    pub fn validate_for_physics(&self) -> Result<()> {
        self.validate()?;
        let v = &self.vertices;
        let spans_volume = v.len() >= 4 && {
            let extent = self.bounding_radius().max(1e-12);
            let tol = 1e-9 * extent.powi(3);
            let a = v[0];
            let (i, _) = v
                .iter()
                .enumerate()
                .max_by(|x, y| (x.1 - a).norm().total_cmp(&(y.1 - a).norm()))
                .unwrap();
            let b = v[i];
            let (j, _) = v
                .iter()
                .enumerate()
                .max_by(|x, y| {
                    (x.1 - a).cross(&(b - a)).norm().total_cmp(&(y.1 - a).cross(&(b - a)).norm())
                })
                .unwrap();
            let n = (b - a).cross(&(v[j] - a));
            v.iter().any(|p| (p - a).dot(&n).abs() > tol)
        };
        if spans_volume {
            Ok(())
        } else {
            Err(Error::Degenerate(format!(
                "mesh `{}` needs at least 4 non-coplanar vertices",
                self.object_id
            )))
        }
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Largest distance of any vertex from the object-frame origin.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn vertex_centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len().max(1) as f64
    }

    pub fn transformed_vertices(&self, pose: &Pose6D) -> Vec<Vec3> {
        self.vertices.iter().map(|v| pose.transform_point(v)).collect()
    }

    /// Area-weighted uniform samples on the surface, with the face normal of each
    /// sample (from the triangle winding).
    pub fn sample_surface_with_normals<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(Vec3, Vec3)> {
        let mut cumulative = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            total += self.triangle_area(t);
            cumulative.push(total);
        }
        if total <= 0.0 {
            return Vec::new();
        }
        (0..n)
            .map(|_| {
                let r = rng.random::<f64>() * total;
                let t = cumulative.partition_point(|&c| c < r).min(cumulative.len() - 1);
                let [a, b, c] = self.triangle(t);
                let (mut s, mut u): (f64, f64) = (rng.random(), rng.random());
                if s + u > 1.0 {
                    s = 1.0 - s;
                    u = 1.0 - u;
                }
                let p = a + (b - a) * s + (c - a) * u;
                let normal = (b - a).cross(&(c - a)).normalize();
                (p, normal)
            })
            .collect()
    }

    pub fn sample_surface<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec3> {
        self.sample_surface_with_normals(n, rng).into_iter().map(|(p, _)| p).collect()
    }

    /// Signed volume from the divergence theorem; positive for outward winding.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle(t);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }
}
