use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Axis-aligned pixel box over half-open intervals `[x_min, x_max) × [y_min, y_max)`.
///
/// Integer bounds keep area and IoU arithmetic exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i32; 4]", into = "[i32; 4]")]
pub struct BBox2D {
    pub x_min: i32,
    pub y_min: i32,
    pub x_max: i32,
    pub y_max: i32,
}

impl TryFrom<[i32; 4]> for BBox2D {
    type Error = Error;

    fn try_from(v: [i32; 4]) -> Result<Self> {
        BBox2D::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox2D> for [i32; 4] {
    fn from(b: BBox2D) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BBox2D {
    pub fn new(x_min: i32, y_min: i32, x_max: i32, y_max: i32) -> Result<Self> {
        if x_min < x_max && y_min < y_max {
            Ok(BBox2D {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        } else {
            Err(Error::invalid(
                "bbox",
                format!("[{x_min}, {x_max}) x [{y_min}, {y_max}) is empty"),
            ))
        }
    }

    pub fn width(&self) -> i32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> i32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> i64 {
        self.width() as i64 * self.height() as i64
    }

    pub fn diagonal(&self) -> f64 {
        (self.width() as f64).hypot(self.height() as f64)
    }

    pub fn center(&self) -> [f64; 2] {
        [
            (self.x_min + self.x_max) as f64 / 2.0,
            (self.y_min + self.y_max) as f64 / 2.0,
        ]
    }

    pub fn intersection(&self, other: &BBox2D) -> Option<BBox2D> {
        BBox2D::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        )
        .ok()
    }

    /// Clip to `[0, width) × [0, height)`; `None` when nothing remains.
    pub fn clip(&self, width: u32, height: u32) -> Option<BBox2D> {
        BBox2D::new(
            self.x_min.max(0),
            self.y_min.max(0),
            self.x_max.min(width as i32),
            self.y_max.min(height as i32),
        )
        .ok()
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x_min >= 0 && self.y_min >= 0 && self.x_max <= width as i32 && self.y_max <= height as i32
    }

    pub fn contains_box(&self, other: &BBox2D) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    /// Largest absolute difference between corresponding edges, in pixels.
    pub fn max_edge_delta(&self, other: &BBox2D) -> i32 {
        (self.x_min - other.x_min)
            .abs()
            .max((self.y_min - other.y_min).abs())
            .max((self.x_max - other.x_max).abs())
            .max((self.y_max - other.y_max).abs())
    }

    pub fn iou(&self, other: &BBox2D) -> f64 {
        bbox_iou(self, other)
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn bbox_iou(a: &BBox2D, b: &BBox2D) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}
