//! The detector boundary. A [`Detector`] turns one rendered view into boxes with
//! confidences; implementations here are a ground-truth oracle, a noisy mock and a
//! reader for detections produced elsewhere.

mod exchange;

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotate::Annotation;
use crate::geom::BBox2D;
use crate::render::RenderedView;
use crate::{rng, Error, Result};

pub use exchange::{export_detections, import_detections, DetectionRecord};

/// Detections at or below this confidence are not trusted by default.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub object_id: String,
    pub bbox: BBox2D,
    pub confidence: f64,
}

/// Everything a detector may look at for one view. `ground_truth` is only
/// available in simulation and is what the oracle and the mock consume.
pub struct ViewInput<'a> {
    pub view: &'a RenderedView,
    pub image_path: &'a str,
    /// Stable per-view key that seeds any per-view randomness.
    pub key: u64,
    pub ground_truth: &'a [Annotation],
}

pub trait Detector: Send + Sync {
    fn detect(&self, input: &ViewInput) -> Result<Vec<Detection>>;
}

/// Keep detections whose confidence exceeds `threshold`.
pub fn confident(detections: &[Detection], threshold: f64) -> Vec<Detection> {
    detections.iter().filter(|d| d.confidence > threshold).cloned().collect()
}

/// Returns the ground-truth boxes with confidence 1.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleDetector;

impl Detector for OracleDetector {
    fn detect(&self, input: &ViewInput) -> Result<Vec<Detection>> {
        Ok(input
            .ground_truth
            .iter()
            .map(|a| Detection {
                object_id: a.object_id.clone(),
                bbox: a.bbox,
                confidence: 1.0,
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockDetectorParams {
    /// Standard deviation of the box-centre offset per axis, as a fraction of the box diagonal.
    pub center_sigma: f64,
    /// Standard deviation of the relative width and height change.
    pub scale_sigma: f64,
    pub miss_probability: f64,
    /// Confidence lost per unit of occluded fraction.
    pub occlusion_sensitivity: f64,
    /// Confidence lost per unit of jitter magnitude.
    pub jitter_penalty: f64,
    pub seed: u64,
}

impl Default for MockDetectorParams {
    fn default() -> Self {
        MockDetectorParams {
            center_sigma: 0.1,
            scale_sigma: 0.1,
            miss_probability: 0.2,
            occlusion_sensitivity: 1.0,
            jitter_penalty: 0.5,
            seed: 0,
        }
    }
}

impl MockDetectorParams {
    /// No jitter, no misses.
    pub fn exact() -> Self {
        MockDetectorParams {
            center_sigma: 0.0,
            scale_sigma: 0.0,
            miss_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.center_sigma >= 0.0
            && self.scale_sigma >= 0.0
            && (0.0..=1.0).contains(&self.miss_probability)
            && self.occlusion_sensitivity >= 0.0
            && self.jitter_penalty >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("mock detector params", format!("{self:?}")))
        }
    }
}

/// Confidence of a detection of an object with `visible_fraction` whose box was
/// perturbed by `jitter` (combined relative centre and scale error).
pub fn mock_confidence(params: &MockDetectorParams, visible_fraction: f64, jitter: f64) -> f64 {
    (1.0 - params.occlusion_sensitivity * (1.0 - visible_fraction) - params.jitter_penalty * jitter).clamp(0.0, 1.0)
}

/// Perturb ground-truth boxes with Gaussian centre and scale noise and random misses.
pub fn mock_detect(
    width: u32,
    height: u32,
    key: u64,
    ground_truth: &[Annotation],
    params: &MockDetectorParams,
) -> Result<Vec<Detection>> {
    params.validate()?;
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::new();
    for a in ground_truth {
        if a.visible_fraction <= 0.0 {
            continue;
        }
        let mut r = rng::stream(params.seed, &[key, rng::hash_str(&a.object_id)]);
        if r.random::<f64>() < params.miss_probability {
            continue;
        }
        let diag = a.bbox.diagonal();
        let [cx, cy] = a.bbox.center();
        let (ox, oy) = (std.sample(&mut r) * params.center_sigma, std.sample(&mut r) * params.center_sigma);
        let (sw, sh) = (std.sample(&mut r) * params.scale_sigma, std.sample(&mut r) * params.scale_sigma);
        let w = (a.bbox.width() as f64 * (1.0 + sw)).max(1.0);
        let h = (a.bbox.height() as f64 * (1.0 + sh)).max(1.0);
        let (ncx, ncy) = (cx + ox * diag, cy + oy * diag);
        let raw = BBox2D {
            x_min: (ncx - w / 2.0).round() as i32,
            y_min: (ncy - h / 2.0).round() as i32,
            x_max: ((ncx + w / 2.0).round() as i32).max((ncx - w / 2.0).round() as i32 + 1),
            y_max: ((ncy + h / 2.0).round() as i32).max((ncy - h / 2.0).round() as i32 + 1),
        };
        let Some(bbox) = raw.clip(width, height) else { continue };
        let jitter = (ox * ox + oy * oy + sw * sw + sh * sh).sqrt();
        out.push(Detection {
            object_id: a.object_id.clone(),
            bbox,
            confidence: mock_confidence(params, a.visible_fraction, jitter),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct MockDetector {
    pub params: MockDetectorParams,
}

impl MockDetector {
    pub fn new(params: MockDetectorParams) -> Self {
        MockDetector { params }
    }
}

impl Detector for MockDetector {
    fn detect(&self, input: &ViewInput) -> Result<Vec<Detection>> {
        mock_detect(input.view.width, input.view.height, input.key, input.ground_truth, &self.params)
    }
}

/// Serves detections imported from an exchange file, keyed by image path.
#[derive(Clone, Debug, Default)]
pub struct FileDetector {
    pub by_image: HashMap<String, Vec<Detection>>,
}

impl Detector for FileDetector {
    fn detect(&self, input: &ViewInput) -> Result<Vec<Detection>> {
        Ok(self.by_image.get(input.image_path).cloned().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::LabelSource;
    use crate::geom::bbox_iou;

    fn gt(id: &str, b: [i32; 4], vf: f64) -> Annotation {
        Annotation {
            object_id: id.into(),
            bbox: BBox2D::new(b[0], b[1], b[2], b[3]).unwrap(),
            visible_fraction: vf,
            source: LabelSource::Synthetic,
        }
    }

    fn boxes() -> Vec<Annotation> {
        vec![
            gt("a", [100, 100, 180, 160], 1.0),
            gt("b", [300, 200, 360, 300], 0.6),
            gt("c", [10, 300, 90, 400], 0.9),
        ]
    }

    #[test]
    fn exact_mock_reproduces_ground_truth() {
        let d = mock_detect(640, 480, 1, &boxes(), &MockDetectorParams::exact()).unwrap();
        assert_eq!(d.len(), 3);
        for (det, g) in d.iter().zip(boxes()) {
            assert_eq!(det.bbox, g.bbox);
        }
        assert_eq!(d[0].confidence, 1.0);
    }

    #[test]
    fn certain_miss_detects_nothing() {
        let p = MockDetectorParams {
            miss_probability: 1.0,
            ..MockDetectorParams::default()
        };
        assert!(mock_detect(640, 480, 1, &boxes(), &p).unwrap().is_empty());
        let hidden = vec![gt("a", [1, 1, 5, 5], 0.0)];
        assert!(mock_detect(640, 480, 1, &hidden, &MockDetectorParams::exact()).unwrap().is_empty());
    }

    #[test]
    fn seeded_and_per_view() {
        let p = MockDetectorParams::default();
        let a = mock_detect(640, 480, 7, &boxes(), &p).unwrap();
        assert_eq!(a, mock_detect(640, 480, 7, &boxes(), &p).unwrap());
        assert_ne!(a, mock_detect(640, 480, 8, &boxes(), &p).unwrap());
        // Reordering the ground truth does not change any single object's detection.
        let mut rev = boxes();
        rev.reverse();
        let mut b = mock_detect(640, 480, 7, &rev, &p).unwrap();
        b.reverse();
        assert_eq!(a, b);
    }

    #[test]
    fn confidence_is_non_increasing_in_jitter() {
        let p = MockDetectorParams::default();
        let mut last = f64::INFINITY;
        for k in 0..100 {
            let c = mock_confidence(&p, 0.8, k as f64 * 0.05);
            assert!(c <= last && (0.0..=1.0).contains(&c));
            last = c;
        }
    }

    #[test]
    fn default_noise_gives_moderate_iou_and_calibrated_confidence() {
        let p = MockDetectorParams {
            miss_probability: 0.0,
            ..MockDetectorParams::default()
        };
        let truth = boxes();
        let (mut sum, mut n) = (0.0, 0.0);
        let (mut good, mut bad) = (Vec::new(), Vec::new());
        for view in 0..100 {
            for d in mock_detect(640, 480, view, &truth, &p).unwrap() {
                let g = truth.iter().find(|g| g.object_id == d.object_id).unwrap();
                let iou = bbox_iou(&d.bbox, &g.bbox);
                sum += iou;
                n += 1.0;
                if iou > 0.5 {
                    good.push(d.confidence);
                } else {
                    bad.push(d.confidence);
                }
            }
        }
        let mean = sum / n;
        assert!(mean > 0.5 && mean < 0.95, "{mean}");
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(!bad.is_empty());
        assert!(avg(&good) > avg(&bad));
    }

    #[test]
    fn threshold_is_strict() {
        let d = vec![
            Detection {
                object_id: "a".into(),
                bbox: BBox2D::new(0, 0, 1, 1).unwrap(),
                confidence: 0.7,
            },
            Detection {
                object_id: "b".into(),
                bbox: BBox2D::new(0, 0, 1, 1).unwrap(),
                confidence: 0.71,
            },
        ];
        let c = confident(&d, 0.7);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].object_id, "b");
    }
}
