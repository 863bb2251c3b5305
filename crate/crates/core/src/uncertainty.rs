//! Certainty coefficients over Monte-Carlo forward passes.
//!
//! Detections from `T` stochastic passes over one image are grouped into
//! instance sets (one member per pass at most). Each set gets three
//! agreement terms:
//!
//! - class: mean over passes of `1 - H(p) / ln m`, the normalized entropy of
//!   the member's class distribution;
//! - box: mean over passes of `IoU(mean box, member box)`;
//! - mask: mean over passes of `IoU(majority mask, member mask)`;
//!
//! and the overall certainty is their product. Every mean divides by the
//! total pass count `T`, so a pass that missed the instance contributes 0.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::geometry::{box_iou, mask_iou, mean_box, mean_mask, BoundingBox, Detection};
use crate::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Predictions of one stochastic forward pass over one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassSet {
    pub pass_index: usize,
    pub detections: Vec<Detection>,
}

/// Detections of one physical instance across passes.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSet {
    members: Vec<(usize, Detection)>,
    total_passes: usize,
}

impl InstanceSet {
    pub fn new(members: Vec<(usize, Detection)>, total_passes: usize) -> Result<Self> {
        if members.is_empty() || members.len() > total_passes {
            return Err(Error::InvalidArgument(format!(
                "instance set needs 1..={total_passes} members, got {}",
                members.len()
            )));
        }
        if members.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidArgument(
                "member pass indexes must be strictly increasing".into(),
            ));
        }
        if members.last().is_some_and(|(p, _)| *p >= total_passes) {
            return Err(Error::InvalidArgument("member pass index out of range".into()));
        }
        Ok(Self {
            members,
            total_passes,
        })
    }

    pub fn members(&self) -> &[(usize, Detection)] {
        &self.members
    }

    pub fn total_passes(&self) -> usize {
        self.total_passes
    }

    fn boxes(&self) -> Vec<BoundingBox> {
        self.members.iter().map(|(_, d)| *d.bbox()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertaintyBreakdown {
    pub c_cls: f64,
    pub c_box: f64,
    pub c_mask: f64,
    pub c: f64,
}

/// How per-instance certainties become one image score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// `1 - mean(c)`.
    #[default]
    Mean,
    /// `1 - min(c)`, the least certain instance.
    Max,
    /// `Σ (1 - c)`; unbounded, favours crowded images.
    Sum,
}

struct Candidate {
    mean: BoundingBox,
    members: Vec<(usize, Detection)>,
}

/// Greedy cross-pass matching.
///
/// Passes are visited by ascending index; within a pass, detections by
/// descending max score (ties: ascending `x1`, then `y1`). A detection joins
/// the set whose running mean box it overlaps most, provided the IoU reaches
/// `iou_threshold` and the set has no member from the current pass (ties go
/// to the lowest set index); otherwise it opens a new set.
pub fn form_instance_sets(passes: &[PassSet], iou_threshold: f64) -> Result<Vec<InstanceSet>> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "iou_threshold must be in (0, 1), got {iou_threshold}"
        )));
    }
    let total = passes.len();
    let mut seen = HashSet::new();
    for p in passes {
        if !seen.insert(p.pass_index) {
            return Err(Error::DuplicatePass(p.pass_index));
        }
        if p.pass_index >= total {
            return Err(Error::InvalidArgument(format!(
                "pass index {} out of range for {total} passes",
                p.pass_index
            )));
        }
    }
    let mut ordered: Vec<&PassSet> = passes.iter().collect();
    ordered.sort_by_key(|p| p.pass_index);

    let mut sets: Vec<Candidate> = Vec::new();
    for pass in ordered {
        let mut dets: Vec<&Detection> = pass.detections.iter().collect();
        dets.sort_by(|a, b| {
            b.max_score()
                .total_cmp(&a.max_score())
                .then(a.bbox().x1().total_cmp(&b.bbox().x1()))
                .then(a.bbox().y1().total_cmp(&b.bbox().y1()))
        });
        for det in dets {
            let mut best: Option<(usize, f64)> = None;
            for (i, set) in sets.iter().enumerate() {
                if set.members.last().is_some_and(|(p, _)| *p == pass.pass_index) {
                    continue;
                }
                let iou = box_iou(&set.mean, det.bbox());
                if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((i, iou));
                }
            }
            match best {
                Some((i, _)) => {
                    let set = &mut sets[i];
                    set.members.push((pass.pass_index, det.clone()));
                    let boxes: Vec<_> = set.members.iter().map(|(_, d)| *d.bbox()).collect();
                    set.mean = mean_box(&boxes)?;
                }
                None => sets.push(Candidate {
                    mean: *det.bbox(),
                    members: vec![(pass.pass_index, det.clone())],
                }),
            }
        }
    }
    sets.into_iter()
        .map(|c| InstanceSet::new(c.members, total))
        .collect()
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

pub fn class_certainty(set: &InstanceSet, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "class certainty needs m >= 2 classes, got {m}"
        )));
    }
    let max_entropy = (m as f64).ln();
    let mut acc = 0.0;
    for (_, det) in &set.members {
        let scores = det.class_scores(m)?;
        let total: f64 = scores.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroScores);
        }
        let p: Vec<f64> = scores.iter().map(|s| s / total).collect();
        acc += (1.0 - entropy(&p) / max_entropy).clamp(0.0, 1.0);
    }
    Ok(acc / set.total_passes as f64)
}

pub fn box_certainty(set: &InstanceSet) -> Result<f64> {
    let boxes = set.boxes();
    let mean = mean_box(&boxes)?;
    let acc: f64 = boxes.iter().map(|b| box_iou(&mean, b)).sum();
    Ok(acc / set.total_passes as f64)
}

/// Members without a mask count as absent passes.
pub fn mask_certainty(set: &InstanceSet) -> Result<f64> {
    let masks: Vec<_> = set
        .members
        .iter()
        .filter_map(|(_, d)| d.mask().cloned())
        .collect();
    if masks.is_empty() {
        return Ok(0.0);
    }
    let mean = mean_mask(&masks)?;
    let mut acc = 0.0;
    for m in &masks {
        acc += mask_iou(&mean, m)?;
    }
    Ok(acc / set.total_passes as f64)
}

pub fn instance_certainty(set: &InstanceSet, m: usize) -> Result<CertaintyBreakdown> {
    let c_cls = class_certainty(set, m)?;
    let c_box = box_certainty(set)?;
    let c_mask = mask_certainty(set)?;
    Ok(CertaintyBreakdown {
        c_cls,
        c_box,
        c_mask,
        c: c_cls * c_box * c_mask,
    })
}

/// `1 - mean(c)` over the image's instance sets; 1.0 when nothing was
/// detected in any pass.
pub fn image_uncertainty(sets: &[InstanceSet], m: usize) -> Result<f64> {
    image_uncertainty_with(sets, m, Aggregation::Mean)
}

pub fn image_uncertainty_with(
    sets: &[InstanceSet],
    m: usize,
    aggregation: Aggregation,
) -> Result<f64> {
    if sets.is_empty() {
        return Ok(1.0);
    }
    let cs = sets
        .iter()
        .map(|s| instance_certainty(s, m).map(|b| b.c))
        .collect::<Result<Vec<_>>>()?;
    Ok(match aggregation {
        Aggregation::Mean => 1.0 - cs.iter().sum::<f64>() / cs.len() as f64,
        Aggregation::Max => 1.0 - cs.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregation::Sum => cs.iter().map(|c| 1.0 - c).sum(),
    })
}

/// Forms instance sets from raw passes and scores the image.
pub fn score_image(
    passes: &[PassSet],
    m: usize,
    iou_threshold: f64,
    aggregation: Aggregation,
) -> Result<f64> {
    let sets = form_instance_sets(passes, iou_threshold)?;
    image_uncertainty_with(&sets, m, aggregation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rle_encode, Bitmap, InstanceMask};

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(b: BoundingBox, scores: &[f64]) -> Detection {
        Detection::new(b, None, scores.to_vec()).unwrap()
    }

    fn det_mask(b: BoundingBox, mask: InstanceMask) -> Detection {
        Detection::new(b, Some(mask), vec![1.0, 0.0]).unwrap()
    }

    fn mask(rows: &[&str]) -> InstanceMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let data = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        rle_encode(&Bitmap::from_rows(h, w, data).unwrap())
    }

    fn pass(i: usize, dets: Vec<Detection>) -> PassSet {
        PassSet {
            pass_index: i,
            detections: dets,
        }
    }

    fn set(members: Vec<(usize, Detection)>, t: usize) -> InstanceSet {
        InstanceSet::new(members, t).unwrap()
    }

    #[test]
    fn matching_examples() {
        // A' = A shifted so that IoU(A, A') = 0.8: (0,0,9,10) vs (0,0,10,10) -> 90/100
        let a = det(bb(0., 0., 10., 10.), &[0.9, 0.1]);
        let a2 = det(bb(0., 0., 9., 10.), &[0.9, 0.1]);
        let sets = form_instance_sets(&[pass(0, vec![a]), pass(1, vec![a2])], 0.5).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].members().len(), 2);

        let sets = form_instance_sets(
            &[
                pass(0, vec![det(bb(0., 0., 1., 1.), &[1.0])]),
                pass(1, vec![det(bb(5., 5., 6., 6.), &[1.0])]),
            ],
            0.5,
        )
        .unwrap();
        assert_eq!(sets.len(), 2);
        assert!(sets.iter().all(|s| s.members().len() == 1));
    }

    #[test]
    fn matching_two_clusters() {
        let a = |dx: f64| det(bb(dx, 0., 10. + dx, 10.), &[0.8, 0.2]);
        let b = |dx: f64| det(bb(50. + dx, 50., 60. + dx, 60.), &[0.7, 0.3]);
        let sets = form_instance_sets(
            &[
                pass(0, vec![a(0.), b(0.)]),
                pass(1, vec![b(1.), a(1.)]),
                pass(2, vec![a(2.)]),
            ],
            0.5,
        )
        .unwrap();
        assert_eq!(sets.len(), 2);
        let passes = |s: &InstanceSet| s.members().iter().map(|(p, _)| *p).collect::<Vec<_>>();
        assert_eq!(passes(&sets[0]), vec![0, 1, 2]);
        assert_eq!(passes(&sets[1]), vec![0, 1]);
        assert_eq!(sets[1].members()[0].1.bbox().x1(), 50.0);
    }

    #[test]
    fn one_member_per_pass() {
        let d = det(bb(0., 0., 10., 10.), &[0.9]);
        let sets = form_instance_sets(&[pass(0, vec![d.clone(), d.clone()]), pass(1, vec![d])], 0.5)
            .unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].members().len(), 2);
        assert_eq!(sets[1].members().len(), 1);
    }

    #[test]
    fn matching_errors() {
        let d = det(bb(0., 0., 1., 1.), &[1.0]);
        assert!(matches!(
            form_instance_sets(&[pass(0, vec![d.clone()]), pass(0, vec![d.clone()])], 0.5),
            Err(Error::DuplicatePass(0))
        ));
        assert!(form_instance_sets(&[pass(0, vec![d.clone()])], 1.0).is_err());
        assert!(form_instance_sets(&[pass(3, vec![d])], 0.5).is_err());
    }

    #[test]
    fn class_certainty_examples() {
        let b = bb(0., 0., 1., 1.);
        let s = set(vec![(0, det(b, &[1.0, 0.0])), (1, det(b, &[1.0, 0.0]))], 2);
        assert_eq!(class_certainty(&s, 2).unwrap(), 1.0);
        let s = set(vec![(0, det(b, &[1.0, 0.0])), (1, det(b, &[0.5, 0.5]))], 2);
        assert!((class_certainty(&s, 2).unwrap() - 0.5).abs() < 1e-12);
        let s = set(vec![(2, det(b, &[1.0, 0.0]))], 4);
        assert_eq!(class_certainty(&s, 2).unwrap(), 0.25);
        let s = set(vec![(0, det(b, &[0.0, 0.0]))], 1);
        assert!(matches!(class_certainty(&s, 2), Err(Error::ZeroScores)));
    }

    #[test]
    fn box_certainty_examples() {
        let a = det(bb(0., 0., 4., 4.), &[1.0]);
        let s = set(vec![(0, a.clone()), (1, a.clone()), (2, a.clone())], 3);
        assert_eq!(box_certainty(&s).unwrap(), 1.0);
        let s = set(vec![(0, a.clone()), (1, a.clone())], 4);
        assert_eq!(box_certainty(&s).unwrap(), 0.5);
        // mean box (1,0,5,4); IoU to each member = 12/20
        let s = set(vec![(0, a), (1, det(bb(2., 0., 6., 4.), &[1.0]))], 2);
        assert!((box_certainty(&s).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn mask_certainty_examples() {
        let b = bb(0., 0., 4., 4.);
        let m = mask(&["##..", "##..", "....", "...."]);
        let s = set(vec![(0, det_mask(b, m.clone())), (1, det_mask(b, m.clone()))], 2);
        assert_eq!(mask_certainty(&s).unwrap(), 1.0);
        let s = set(vec![(1, det_mask(b, m.clone()))], 4);
        assert_eq!(mask_certainty(&s).unwrap(), 0.25);
        let s = set(vec![(0, det(b, &[1.0]))], 2);
        assert_eq!(mask_certainty(&s).unwrap(), 0.0);
    }

    #[test]
    fn mask_certainty_half_overlap() {
        // each mask 8 px, overlap 4 px on a 4x4 grid
        let m1 = mask(&["####", "####", "....", "...."]);
        let m2 = mask(&["....", "####", "####", "...."]);
        // bitmap oracle: majority of two = union (12 px); IoU(union, m_i) = 8/12
        let b = bb(0., 0., 4., 4.);
        let s = set(vec![(0, det_mask(b, m1)), (1, det_mask(b, m2))], 2);
        assert!((mask_certainty(&s).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn product_and_aggregation() {
        let b = bb(0., 0., 4., 4.);
        let m = mask(&["##", "##"]);
        let full = Detection::new(b, Some(m), vec![1.0, 0.0]).unwrap();
        let s = set(vec![(0, full.clone()), (1, full.clone())], 2);
        let br = instance_certainty(&s, 2).unwrap();
        assert_eq!((br.c_cls, br.c_box, br.c_mask, br.c), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(image_uncertainty(&[s.clone()], 2).unwrap(), 0.0);
        assert_eq!(image_uncertainty(&[], 2).unwrap(), 1.0);

        let flat = Detection::new(b, Some(mask(&["##", "##"])), vec![0.5, 0.5]).unwrap();
        let zero = set(vec![(0, flat.clone()), (1, flat)], 2);
        assert_eq!(instance_certainty(&zero, 2).unwrap().c, 0.0);
        assert_eq!(image_uncertainty_with(&[s.clone(), zero.clone()], 2, Aggregation::Mean).unwrap(), 0.5);
        assert_eq!(image_uncertainty_with(&[s.clone(), zero.clone()], 2, Aggregation::Max).unwrap(), 1.0);
        assert_eq!(image_uncertainty_with(&[s, zero], 2, Aggregation::Sum).unwrap(), 1.0);
    }
}
