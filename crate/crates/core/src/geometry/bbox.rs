use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Axis-aligned box in corner form, real-valued pixel coordinates.
///
/// Construction guarantees `x1 < x2`, `y1 < y2` and finite coordinates, so
/// every `BoundingBox` in the system has positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let reject = |reason| Error::InvalidBox {
            x1,
            y1,
            x2,
            y2,
            reason,
        };
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(reject("coordinates must be finite"));
        }
        if x1 >= x2 {
            return Err(reject("x1 must be < x2"));
        }
        if y1 >= y2 {
            return Err(reject("y1 must be < y2"));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// From COCO `[x, y, w, h]`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// COCO `[x, y, w, h]`.
    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x1, self.y1, self.width(), self.height()]
    }

    /// True when the box lies inside a `width` × `height` image.
    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height
    }

    /// Intersection with the image rectangle, `None` if nothing remains.
    pub fn clip_to(&self, width: f64, height: f64) -> Option<Self> {
        Self::new(
            self.x1.max(0.0),
            self.y1.max(0.0),
            self.x2.min(width),
            self.y2.min(height),
        )
        .ok()
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

/// Continuous-area intersection over union; 0 for disjoint boxes.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Coordinate-wise arithmetic mean.
///
/// Computed as an offset from the first box so that `k` identical boxes
/// average back to exactly the same coordinates.
pub fn mean_box(boxes: &[BoundingBox]) -> Result<BoundingBox> {
    let first = boxes.first().ok_or(Error::Empty("box list"))?;
    let n = boxes.len() as f64;
    let mut acc = [0.0f64; 4];
    for b in &boxes[1..] {
        acc[0] += b.x1 - first.x1;
        acc[1] += b.y1 - first.y1;
        acc[2] += b.x2 - first.x2;
        acc[3] += b.y2 - first.y2;
    }
    BoundingBox::new(
        first.x1 + acc[0] / n,
        first.y1 + acc[1] / n,
        first.x2 + acc[2] / n,
        first.y2 + acc[3] / n,
    )
}
