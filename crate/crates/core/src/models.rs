//! The loaded object library: meshes plus the data derived from them once at load
//! time (convex collision hull and a fixed surface sample used for registration).

use std::collections::BTreeMap;
use std::path::Path;

use rapier3d::math::Vector as PVec;
use rapier3d::parry::transformation::try_convex_hull;

use crate::geom::{meshio, shapes, Pose6D, TriMesh, Vec3};
use crate::{rng, Error, Result};

/// Default number of area-weighted surface samples per model.
pub const DEFAULT_SAMPLES: usize = 2048;
/// Seed of the model surface sampling.
pub const SAMPLE_SEED: u64 = 0x5eed_2048;

/// Convex hull with deduplicated face normals and edge directions.
#[derive(Clone, Debug)]
pub struct ConvexHull {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub face_normals: Vec<Vec3>,
    pub edge_directions: Vec<Vec3>,
}

fn push_unique(list: &mut Vec<Vec3>, v: Vec3, sign_agnostic: bool) {
    let dup = list.iter().any(|u| {
        let d = u.dot(&v);
        if sign_agnostic {
            d.abs() > 1.0 - 1e-9
        } else {
            d > 1.0 - 1e-9
        }
    });
    if !dup {
        list.push(v);
    }
}

impl ConvexHull {
    pub fn of_points(points: &[Vec3]) -> Result<Self> {
        let pts: Vec<PVec> = points
            .iter()
            .map(|p| PVec::new(p.x as f32, p.y as f32, p.z as f32))
            .collect();
        let (hv, ht) = try_convex_hull(&pts).map_err(|e| Error::Degenerate(format!("convex hull: {e:?}")))?;
        if ht.len() < 4 {
            return Err(Error::Degenerate("convex hull has fewer than four faces".into()));
        }
        let vertices: Vec<Vec3> = hv.iter().map(|p| Vec3::new(p.x as f64, p.y as f64, p.z as f64)).collect();
        let mut face_normals = Vec::new();
        let mut edge_directions = Vec::new();
        for t in &ht {
            let [a, b, c] = t.map(|i| vertices[i as usize]);
            let n = (b - a).cross(&(c - a));
            if n.norm() > 1e-14 {
                push_unique(&mut face_normals, n.normalize(), false);
            }
            for (p, q) in [(a, b), (b, c), (c, a)] {
                let e = q - p;
                if e.norm() > 1e-12 {
                    push_unique(&mut edge_directions, e.normalize(), true);
                }
            }
        }
        Ok(ConvexHull {
            vertices,
            triangles: ht,
            face_normals,
            edge_directions,
        })
    }

    /// Minimum width over the face-normal directions: the thinnest slab that
    /// contains the hull.
    pub fn min_width(&self) -> f64 {
        self.face_normals
            .iter()
            .map(|n| {
                let (lo, hi) = self.extent_along(n);
                hi - lo
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn extent_along(&self, dir: &Vec3) -> (f64, f64) {
        self.vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let d = v.dot(dir);
            (lo.min(d), hi.max(d))
        })
    }

    /// Lowest point along `up` of the hull under `pose`.
    pub fn min_height(&self, pose: &Pose6D, up: &Vec3) -> f64 {
        self.vertices
            .iter()
            .map(|v| pose.transform_point(v).dot(up))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub mesh: TriMesh,
    pub hull: ConvexHull,
    /// Area-weighted surface sample in the object frame.
    pub samples: Vec<Vec3>,
    pub sample_normals: Vec<Vec3>,
    /// Largest vertex distance from the object origin.
    pub radius: f64,
}

impl Model {
    pub fn new(mesh: TriMesh, sample_count: usize) -> Result<Self> {
        mesh.validate_for_physics()?;
        let hull = ConvexHull::of_points(&mesh.vertices)?;
        let mut r = rng::stream(SAMPLE_SEED, &[rng::hash_str(&mesh.object_id)]);
        let (samples, sample_normals) = mesh.sample_surface_with_normals(sample_count, &mut r).into_iter().unzip();
        let radius = mesh.bounding_radius();
        Ok(Model {
            mesh,
            hull,
            samples,
            sample_normals,
            radius,
        })
    }

    pub fn id(&self) -> &str {
        &self.mesh.object_id
    }

    /// Largest distance between two hull vertices.
    pub fn diameter(&self) -> f64 {
        let v = &self.hull.vertices;
        let mut d: f64 = 0.0;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                d = d.max((v[i] - v[j]).norm());
            }
        }
        d
    }
}

/// Object models keyed by id, iterated in id order.
#[derive(Clone, Debug, Default)]
pub struct ModelLibrary {
    models: BTreeMap<String, Model>,
}

impl ModelLibrary {
    pub fn from_meshes(meshes: Vec<TriMesh>, sample_count: usize) -> Result<Self> {
        if meshes.is_empty() {
            return Err(Error::EmptyModelSet);
        }
        let mut models = BTreeMap::new();
        for m in meshes {
            let id = m.object_id.clone();
            if models.insert(id.clone(), Model::new(m, sample_count)?).is_some() {
                return Err(Error::invalid("model library", format!("duplicate object id `{id}`")));
            }
        }
        Ok(ModelLibrary { models })
    }

    pub fn builtin() -> Self {
        Self::from_meshes(shapes::builtin_catalog(), DEFAULT_SAMPLES).expect("builtin meshes are valid")
    }

    pub fn asymmetric() -> Self {
        Self::from_meshes(shapes::asymmetric_catalog(), DEFAULT_SAMPLES).expect("builtin meshes are valid")
    }

    /// Load every `.obj`/`.ply` file in `dir` (sorted by name).
    pub fn load_dir(dir: &Path, sample_count: usize) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                    Some("obj") | Some("ply")
                )
            })
            .collect();
        paths.sort();
        let meshes = paths.iter().map(|p| meshio::load_mesh(p)).collect::<Result<Vec<_>>>()?;
        Self::from_meshes(meshes, sample_count)
    }

    pub fn get(&self, id: &str) -> Result<&Model> {
        self.models.get(id).ok_or_else(|| Error::UnknownObject(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.models.contains_key(id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.models.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Model> {
        self.models.values()
    }

    /// Restrict to the given ids.
    pub fn subset(&self, ids: &[&str]) -> Result<Self> {
        let mut models = BTreeMap::new();
        for id in ids {
            models.insert(id.to_string(), self.get(id)?.clone());
        }
        if models.is_empty() {
            return Err(Error::EmptyModelSet);
        }
        Ok(ModelLibrary { models })
    }
}
