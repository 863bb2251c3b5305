//! Geometric primitives and segmentation metrics.
//!
//! All functions here are pure and thread-safe.

mod bbox;
mod mask;

use serde::{Deserialize, Serialize};

pub use bbox::{box_iou, mean_box, BoundingBox};
pub use mask::{
    dice, ellipse_mask, mask_iou, mean_mask, rle_decode, rle_encode, union_masks, Bitmap,
    InstanceMask,
};

use crate::{Error, Result};

/// One predicted instance from a single forward pass.
///
/// Wire form: `{"bbox": [x1,y1,x2,y2], "scores": [...], "mask": {...} | null}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionJson", into = "DetectionJson")]
pub struct Detection {
    bbox: BoundingBox,
    mask: Option<InstanceMask>,
    scores: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DetectionJson {
    bbox: BoundingBox,
    scores: Vec<f64>,
    #[serde(default)]
    mask: Option<InstanceMask>,
}

impl TryFrom<DetectionJson> for Detection {
    type Error = Error;

    fn try_from(v: DetectionJson) -> Result<Self> {
        Detection::new(v.bbox, v.mask, v.scores)
    }
}

impl From<Detection> for DetectionJson {
    fn from(d: Detection) -> Self {
        DetectionJson {
            bbox: d.bbox,
            scores: d.scores,
            mask: d.mask,
        }
    }
}

impl Detection {
    pub fn new(bbox: BoundingBox, mask: Option<InstanceMask>, scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("score vector"));
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidArgument(format!("score {s} outside [0, 1]")));
        }
        Ok(Self { bbox, mask, scores })
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn mask(&self) -> Option<&InstanceMask> {
        self.mask.as_ref()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn max_score(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the highest score (first on ties).
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = i;
            }
        }
        best
    }

    /// Class distribution over `m` classes.
    ///
    /// A single foreground confidence `p` is lifted to `[p, 1 - p]` so the
    /// class entropy stays defined for one-class detectors.
    pub fn class_scores(&self, m: usize) -> Result<Vec<f64>> {
        let scores = if self.scores.len() == 1 {
            vec![self.scores[0], 1.0 - self.scores[0]]
        } else {
            self.scores.clone()
        };
        if scores.len() != m {
            return Err(Error::InvalidArgument(format!(
                "detection carries {} class scores, expected {m}",
                scores.len()
            )));
        }
        Ok(scores)
    }
}
