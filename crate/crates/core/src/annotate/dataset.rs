//! JSON-lines dataset manifest: one [`DatasetRecord`] per line, image paths relative
//! to the manifest's directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Annotation;
use crate::geom::{Camera, Pose6D};
use crate::render::{LightConfig, ViewPaths};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub object_id: String,
    pub pose: Pose6D,
}

/// Where a self-labeled record came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scene_id: String,
    pub iteration: usize,
    /// LCP of each pose estimate used for the labels.
    pub lcp: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub scene_id: String,
    pub view_id: String,
    pub images: ViewPaths,
    pub camera: Camera,
    pub light: LightConfig,
    pub annotations: Vec<Annotation>,
    pub poses: Vec<ObjectPose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl DatasetRecord {
    fn check(&self, line: usize) -> Result<()> {
        for a in &self.annotations {
            if !self.poses.iter().any(|p| p.object_id == a.object_id) {
                return Err(Error::Malformed {
                    what: "manifest",
                    line,
                    reason: format!("annotation for `{}` which is not in the scene", a.object_id),
                });
            }
        }
        Ok(())
    }
}

/// Appends records to a manifest; the single writer of its file.
pub struct ManifestWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl ManifestWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(ManifestWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(f),
        })
    }

    pub fn append(&mut self, record: &DatasetRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut w = ManifestWriter::create(path)?;
    for r in records {
        w.append(r)?;
    }
    w.finish()
}

/// Read a manifest and check that every referenced image exists next to it.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    if !path.exists() {
        return Err(Error::MissingFile { path: path.to_path_buf() });
    }
    let root = path.parent().unwrap_or(Path::new("."));
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            what: "manifest",
            line: i + 1,
            reason: e.to_string(),
        })?;
        rec.check(i + 1)?;
        for p in [&rec.images.rgb, &rec.images.depth, &rec.images.instance] {
            let full = root.join(p);
            if !full.exists() {
                return Err(Error::MissingFile { path: full });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::LabelSource;
    use crate::geom::{BBox2D, Intrinsics, Vec3};

    fn record() -> DatasetRecord {
        DatasetRecord {
            scene_id: "s0".into(),
            view_id: "v1".into(),
            images: ViewPaths::new("s0", "v1"),
            camera: Camera::look_at(Intrinsics::centered(64, 48, 60.0), Vec3::new(0.1, 0.2, 1.0), Vec3::zeros(), Vec3::z())
                .unwrap(),
            light: LightConfig::default(),
            annotations: vec![Annotation {
                object_id: "cube".into(),
                bbox: BBox2D::new(1, 2, 30, 40).unwrap(),
                visible_fraction: 0.75,
                source: LabelSource::Synthetic,
            }],
            poses: vec![ObjectPose {
                object_id: "cube".into(),
                pose: Pose6D::from_axis_angle(Vec3::z(), 0.3, Vec3::new(0.01, 0.02, 0.03)),
            }],
            provenance: None,
        }
    }

    fn touch_images(root: &Path, r: &DatasetRecord) {
        for p in [&r.images.rgb, &r.images.depth, &r.images.instance] {
            fs::write(root.join(p), b"").unwrap();
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let r = record();
        touch_images(dir.path(), &r);
        let m = dir.path().join("manifest.jsonl");
        write_dataset(&m, &[r.clone(), r.clone()]).unwrap();
        assert_eq!(read_dataset(&m).unwrap(), vec![r.clone(), r]);
    }

    #[test]
    fn empty_manifest_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("manifest.jsonl");
        write_dataset(&m, &[]).unwrap();
        assert!(read_dataset(&m).unwrap().is_empty());
    }

    #[test]
    fn missing_image_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("manifest.jsonl");
        write_dataset(&m, &[record()]).unwrap();
        match read_dataset(&m) {
            Err(Error::MissingFile { path }) => assert!(path.ends_with("s0_v1.ppm")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_lines_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("manifest.jsonl");
        fs::write(&m, "{\"scene_id\": 3}\n").unwrap();
        assert!(matches!(read_dataset(&m), Err(Error::Malformed { line: 1, .. })));
        let mut r = record();
        r.annotations[0].object_id = "ghost".into();
        touch_images(dir.path(), &r);
        write_dataset(&m, &[r]).unwrap();
        assert!(matches!(read_dataset(&m), Err(Error::Malformed { .. })));
    }
}
