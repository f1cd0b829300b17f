//! ASCII OBJ and PLY readers/writers. The object id of a loaded mesh is the file stem.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::shapes::DEFAULT_ALBEDO;
use super::{TriMesh, Vec3};
use crate::{Error, Result};

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = stem(path);
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(ext) if ext == "obj" => parse_obj(&id, &text),
        Some(ext) if ext == "ply" => parse_ply(&id, &text),
        _ => Err(Error::invalid("mesh file", format!("{}: expected .obj or .ply", path.display()))),
    }
}

fn malformed(what: &'static str, line: usize, reason: impl Into<String>) -> Error {
    Error::Malformed {
        what,
        line,
        reason: reason.into(),
    }
}

/// `v` and `f` records; polygons are fan-triangulated, `v/vt/vn` and negative
/// indices are accepted.
pub fn parse_obj(id: &str, text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| malformed("OBJ", lineno, e.to_string()))?;
                if c.len() != 3 {
                    return Err(malformed("OBJ", lineno, "vertex needs three coordinates"));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let n = vertices.len() as i64;
                let idx: Vec<u32> = tok
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let k: i64 = first.parse().map_err(|_| malformed("OBJ", lineno, format!("bad index `{t}`")))?;
                        let k = if k < 0 { n + k } else { k - 1 };
                        if k < 0 || k >= n {
                            return Err(malformed("OBJ", lineno, format!("index {t} out of range")));
                        }
                        Ok(k as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(malformed("OBJ", lineno, "face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(id, vertices, triangles, DEFAULT_ALBEDO)
}

/// ASCII PLY with a `vertex` element (x, y, z first or named anywhere; optional
/// uchar red/green/blue) and a `face` element holding a vertex index list.
pub fn parse_ply(id: &str, text: &str) -> Result<TriMesh> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(malformed("PLY", 1, "missing `ply` magic")),
    }
    struct Element {
        name: String,
        count: usize,
        props: Vec<String>,
    }
    let mut elements: Vec<Element> = Vec::new();
    for (i, line) in lines.by_ref() {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(malformed("PLY", i + 1, format!("unsupported format `{fmt}`")))
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| malformed("PLY", i + 1, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, name] | ["property", _, name] => {
                let el = elements.last_mut().ok_or_else(|| malformed("PLY", i + 1, "property before element"))?;
                el.props.push(name.to_string());
            }
            ["end_header"] => break,
            _ => {}
        }
    }
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let (i, line) = lines.next().ok_or_else(|| malformed("PLY", 0, "unexpected end of data"))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| malformed("PLY", i + 1, e.to_string()))?;
            match el.name.as_str() {
                "vertex" => {
                    let get = |name: &str| el.props.iter().position(|p| p == name).and_then(|k| vals.get(k).copied());
                    let (Some(x), Some(y), Some(z)) = (get("x"), get("y"), get("z")) else {
                        return Err(malformed("PLY", i + 1, "vertex without x/y/z"));
                    };
                    vertices.push(Vec3::new(x, y, z));
                    if let (Some(r), Some(g), Some(b)) = (get("red"), get("green"), get("blue")) {
                        colors.push([r / 255.0, g / 255.0, b / 255.0]);
                    }
                }
                "face" => {
                    let n = *vals.first().ok_or_else(|| malformed("PLY", i + 1, "empty face"))? as usize;
                    if n < 3 || vals.len() < n + 1 {
                        return Err(malformed("PLY", i + 1, "face needs at least three indices"));
                    }
                    let idx: Vec<u32> = vals[1..=n].iter().map(|&v| v as u32).collect();
                    for k in 1..n - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
    }
    let albedo = if !colors.is_empty() && colors.len() == vertices.len() {
        let n = colors.len() as f64;
        [0, 1, 2].map(|c| colors.iter().map(|col| col[c]).sum::<f64>() / n)
    } else {
        DEFAULT_ALBEDO
    };
    TriMesh::new(id, vertices, triangles, albedo)
}

pub fn to_obj(mesh: &TriMesh) -> String {
    let mut s = format!("# {}\n", mesh.object_id);
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn to_ply(mesh: &TriMesh) -> String {
    let rgb = mesh.albedo.map(|c| (c * 255.0).round() as u8);
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {} {} {} {}", v.x, v.y, v.z, rgb[0], rgb[1], rgb[2]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

/// Point cloud as an ASCII PLY with vertices only (debug dumps).
pub fn points_to_ply(points: &[Vec3]) -> String {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    );
    for p in points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

/// Vertices of an ASCII PLY, ignoring faces.
pub fn parse_ply_points(text: &str) -> Result<Vec<Vec3>> {
    let mut lines = text.lines().enumerate();
    let mut count = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    for (i, line) in lines.by_ref() {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| malformed("PLY", i + 1, "bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| malformed("PLY", 0, "no vertex element"))?;
    let pos = |n: &str| props.iter().position(|p| p == n).ok_or_else(|| malformed("PLY", 0, format!("no `{n}` property")));
    let (ix, iy, iz) = (pos("x")?, pos("y")?, pos("z")?);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (i, line) = lines.next().ok_or_else(|| malformed("PLY", 0, "unexpected end of data"))?;
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<Result<_, _>>()
            .map_err(|e: std::num::ParseFloatError| malformed("PLY", i + 1, e.to_string()))?;
        let get = |k: usize| v.get(k).copied().ok_or_else(|| malformed("PLY", i + 1, "short vertex row"));
        out.push(Vec3::new(get(ix)?, get(iy)?, get(iz)?));
    }
    Ok(out)
}
