//! Predictor wire protocol (JSON over HTTP, also used in-process).
//!
//! ```text
//! POST /v1/train   TrainRequest   -> TrainResponse
//! POST /v1/predict PredictRequest -> PredictResponse
//! GET  /v1/health                 -> HealthResponse
//! ```
//!
//! Boxes are corner-form `[x1, y1, x2, y2]` in pixels; masks are COCO
//! uncompressed RLE `{"size": [h, w], "counts": [...]}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingBox, Detection};
use crate::uncertainty::PassSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledImage {
    pub image_id: u64,
    pub boxes: Vec<BoundingBox>,
    pub category_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub parent_tag: Option<String>,
    pub labeled: Vec<LabeledImage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub model_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub model_tag: String,
    pub image_ids: Vec<u64>,
    pub passes: usize,
    pub stochastic: bool,
    pub seed: u64,
}

impl PredictRequest {
    /// Passes a conforming predictor must return per image.
    pub fn expected_passes(&self) -> usize {
        if self.stochastic {
            self.passes
        } else {
            1
        }
    }
}

/// Per image id (decimal string key): one detection list per pass.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictResponse {
    pub results: BTreeMap<String, Vec<Vec<Detection>>>,
}

impl PredictResponse {
    pub fn from_ids(results: impl IntoIterator<Item = (u64, Vec<Vec<Detection>>)>) -> Self {
        Self {
            results: results
                .into_iter()
                .map(|(id, passes)| (id.to_string(), passes))
                .collect(),
        }
    }

    pub fn passes(&self, image_id: u64) -> Result<Vec<PassSet>> {
        let passes = self
            .results
            .get(&image_id.to_string())
            .ok_or_else(|| Error::Protocol(format!("no result for image {image_id}")))?;
        Ok(passes
            .iter()
            .enumerate()
            .map(|(pass_index, dets)| PassSet {
                pass_index,
                detections: dets.clone(),
            })
            .collect())
    }

    /// Checks that every requested image is answered with the right pass
    /// count and that masks match the image grid.
    pub fn check_against(
        &self,
        request: &PredictRequest,
        dims: impl Fn(u64) -> Option<(u32, u32)>,
    ) -> Result<()> {
        for &id in &request.image_ids {
            let passes = self
                .results
                .get(&id.to_string())
                .ok_or_else(|| Error::Protocol(format!("no result for image {id}")))?;
            if passes.len() != request.expected_passes() {
                return Err(Error::Protocol(format!(
                    "image {id}: expected {} passes, got {}",
                    request.expected_passes(),
                    passes.len()
                )));
            }
            if let Some((h, w)) = dims(id) {
                let bad = passes
                    .iter()
                    .flatten()
                    .filter_map(Detection::mask)
                    .find(|m| m.height() != h || m.width() != w);
                if let Some(m) = bad {
                    return Err(Error::Protocol(format!(
                        "image {id}: mask is {}x{}, image is {h}x{w}",
                        m.height(),
                        m.width()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub ok: bool,
    pub mechanism: String,
}

/// Body of every non-2xx protocol response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
    pub kind: String,
}

impl From<&Error> for ErrorResponse {
    fn from(e: &Error) -> Self {
        ErrorResponse {
            error: e.to_string(),
            kind: e.kind().to_string(),
        }
    }
}
