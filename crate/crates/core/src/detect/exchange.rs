//! Detection exchange file: JSON lines of `{image_path, object_id, bbox, confidence}`.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Detection, FileDetector};
use crate::geom::BBox2D;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub image_path: String,
    pub object_id: String,
    pub bbox: BBox2D,
    pub confidence: f64,
}

pub fn export_detections<'a>(path: &Path, items: impl IntoIterator<Item = (&'a str, &'a Detection)>) -> Result<()> {
    let mut out = Vec::new();
    for (image_path, d) in items {
        let rec = DetectionRecord {
            image_path: image_path.to_string(),
            object_id: d.object_id.clone(),
            bbox: d.bbox,
            confidence: d.confidence,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.push(b'\n');
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Read an exchange file, validating ids and image paths against the known sets.
pub fn import_detections(
    path: &Path,
    known_images: &BTreeSet<String>,
    known_objects: &BTreeSet<String>,
) -> Result<FileDetector> {
    if !path.exists() {
        return Err(Error::MissingFile { path: path.to_path_buf() });
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut by_image: HashMap<String, Vec<Detection>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Malformed {
            what: "detection file",
            line: i + 1,
            reason,
        };
        let rec: DetectionRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if !(0.0..=1.0).contains(&rec.confidence) {
            return Err(bad(format!("confidence {} outside [0, 1]", rec.confidence)));
        }
        if !known_objects.contains(&rec.object_id) {
            return Err(bad(format!("unknown object id `{}`", rec.object_id)));
        }
        if !known_images.contains(&rec.image_path) {
            return Err(bad(format!("unknown image path `{}`", rec.image_path)));
        }
        by_image.entry(rec.image_path).or_default().push(Detection {
            object_id: rec.object_id,
            bbox: rec.bbox,
            confidence: rec.confidence,
        });
    }
    Ok(FileDetector { by_image })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets() -> (BTreeSet<String>, BTreeSet<String>) {
        (
            ["s0_v0.ppm", "s0_v1.ppm"].map(String::from).into(),
            ["cube", "wedge"].map(String::from).into(),
        )
    }

    fn det(id: &str, c: f64) -> Detection {
        Detection {
            object_id: id.into(),
            bbox: BBox2D::new(3, 4, 50, 60).unwrap(),
            confidence: c,
        }
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let (a, b) = (det("cube", 0.9), det("wedge", 0.123456789));
        export_detections(&p, [("s0_v0.ppm", &a), ("s0_v1.ppm", &b), ("s0_v0.ppm", &b)]).unwrap();
        let (imgs, objs) = sets();
        let fd = import_detections(&p, &imgs, &objs).unwrap();
        assert_eq!(fd.by_image["s0_v0.ppm"], vec![a, b.clone()]);
        assert_eq!(fd.by_image["s0_v1.ppm"], vec![b]);
    }

    #[test]
    fn rejects_unknown_ids_and_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let (imgs, objs) = sets();
        export_detections(&p, [("s0_v0.ppm", &det("banana", 0.9))]).unwrap();
        let err = import_detections(&p, &imgs, &objs).unwrap_err().to_string();
        assert!(err.contains("banana"), "{err}");
        export_detections(&p, [("elsewhere.ppm", &det("cube", 0.9))]).unwrap();
        assert!(import_detections(&p, &imgs, &objs).is_err());
        fs::write(&p, "{\"image_path\":\"s0_v0.ppm\"}\n").unwrap();
        assert!(matches!(import_detections(&p, &imgs, &objs), Err(Error::Malformed { line: 1, .. })));
    }

    #[test]
    fn empty_file_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        fs::write(&p, "").unwrap();
        let (imgs, objs) = sets();
        assert!(import_detections(&p, &imgs, &objs).unwrap().by_image.is_empty());
    }
}
