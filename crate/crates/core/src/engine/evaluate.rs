use std::collections::BTreeMap;

use crate::data_io::Dataset;
use crate::geometry::{dice, union_masks, Detection, InstanceMask};
use crate::{Error, Result};

/// Dice between predicted and ground-truth foreground, per image.
///
/// The predicted foreground is the union of all detection masks; detections
/// without a mask contribute nothing.
pub fn image_dsc(detections: &[Detection], truth: &InstanceMask) -> Result<f64> {
    let masks: Vec<InstanceMask> = detections.iter().filter_map(|d| d.mask().cloned()).collect();
    if masks.is_empty() {
        return dice(&InstanceMask::empty(truth.height(), truth.width())?, truth);
    }
    dice(&union_masks(&masks)?, truth)
}

/// Unweighted mean of per-image foreground Dice over `image_ids`.
///
/// Every id must be a dataset image and have an entry in `predictions`.
pub fn evaluate_dsc(
    predictions: &BTreeMap<u64, Vec<Detection>>,
    dataset: &Dataset,
    image_ids: &[u64],
) -> Result<f64> {
    if image_ids.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut total = 0.0;
    for &id in image_ids {
        if dataset.image(id).is_none() {
            return Err(Error::MissingGroundTruth(id));
        }
        let dets = predictions
            .get(&id)
            .ok_or_else(|| Error::Protocol(format!("no prediction for test image {id}")))?;
        total += image_dsc(dets, &dataset.foreground(id)?)?;
    }
    Ok(total / image_ids.len() as f64)
}
