//! A desk-scale stand-in for a trained detector + promptable segmenter.
//!
//! Skill per difficulty stratum `g` is `s = n / (n + kappa_g)`, where `n`
//! counts the distinct labeled images of that stratum in the model's
//! lineage. Predictions are ground truth degraded by skill:
//!
//! - each instance is found with probability
//!   `recall_min + (recall_max - recall_min) * s`;
//! - its box is the truth box plus a per-image offset (scale
//!   `sigma_base * (1 - s) * diag`) and, on stochastic passes, a per-pass
//!   offset (scale `sigma_pass * (1 - s) * diag`), both multiplied by the
//!   stratum's noise scale;
//! - its mask is the ellipse inscribed in the predicted box;
//! - its foreground confidence is `clamp(s + noise, 0.05, 0.99)`;
//! - each pass adds on average `spurious_rate * (1 - s)` false detections.
//!
//! All draws come from streams keyed by `(seed, image, pass)` and their
//! number does not depend on skill, so two models evaluated with the same
//! seed see the same underlying noise.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::protocol::{
    HealthResponse, PredictRequest, PredictResponse, TrainRequest, TrainResponse,
};
use super::Predictor;
use crate::data_io::Dataset;
use crate::geometry::{ellipse_mask, BoundingBox, Detection};
use crate::rng::{rng_for, unit_f64, Rng};
use crate::{Error, Result};

/// Missing fields in a serialized form take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticPredictorParams {
    /// Half-saturation point of the skill curve, in labeled images, per stratum.
    pub kappa: BTreeMap<String, f64>,
    /// Used for strata missing from `kappa` (including untagged images).
    pub default_kappa: f64,
    /// Multiplier on both jitter scales, per stratum (missing = 1).
    pub noise_scale: BTreeMap<String, f64>,
    pub recall_min: f64,
    pub recall_max: f64,
    pub sigma_base: f64,
    pub sigma_pass: f64,
    pub spurious_rate: f64,
    pub confidence_noise: f64,
    /// Free-text label reported by `/v1/health`.
    pub mechanism: String,
}

impl Default for SyntheticPredictorParams {
    fn default() -> Self {
        Self {
            kappa: BTreeMap::from([("easy".into(), 25.0), ("hard".into(), 25.0)]),
            default_kappa: 25.0,
            noise_scale: BTreeMap::from([("easy".into(), 1.0), ("hard".into(), 2.0)]),
            recall_min: 0.55,
            recall_max: 0.98,
            sigma_base: 0.10,
            sigma_pass: 0.06,
            spurious_rate: 0.5,
            confidence_noise: 0.1,
            mechanism: "synthetic mc-dropblock (backbone-neck)".into(),
        }
    }
}

impl SyntheticPredictorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.recall_min) || !unit(self.recall_max) || self.recall_min > self.recall_max {
            return bad(format!(
                "need 0 <= recall_min <= recall_max <= 1, got {} and {}",
                self.recall_min, self.recall_max
            ));
        }
        for (name, v) in [
            ("sigma_base", self.sigma_base),
            ("sigma_pass", self.sigma_pass),
            ("spurious_rate", self.spurious_rate),
            ("confidence_noise", self.confidence_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        let kappas = self.kappa.values().chain([&self.default_kappa]);
        if kappas.into_iter().any(|&k| !(k > 0.0 && k.is_finite())) {
            return bad("kappa values must be positive".into());
        }
        if self.noise_scale.values().any(|&k| !(k >= 0.0 && k.is_finite())) {
            return bad("noise_scale values must be >= 0".into());
        }
        Ok(())
    }

    fn kappa_for(&self, stratum: &str) -> f64 {
        self.kappa.get(stratum).copied().unwrap_or(self.default_kappa)
    }

    fn noise_scale_for(&self, stratum: &str) -> f64 {
        self.noise_scale.get(stratum).copied().unwrap_or(1.0)
    }

    pub fn detection_probability(&self, skill: f64) -> f64 {
        (self.recall_min + (self.recall_max - self.recall_min) * skill).clamp(0.0, 1.0)
    }
}

const UNTAGGED: &str = "";

#[derive(Debug, Clone)]
struct ModelState {
    seen: BTreeSet<u64>,
    per_stratum: BTreeMap<String, usize>,
}

#[derive(Debug)]
pub struct SyntheticPredictor {
    dataset: Arc<Dataset>,
    params: SyntheticPredictorParams,
    models: HashMap<String, ModelState>,
    next_id: u64,
}

// stream identifiers
const IMAGE_OFFSET: u64 = 1;
const PASS: u64 = 2;
const EVAL_PASS: u64 = 3;
const SPURIOUS: u64 = 4;

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Smallest `k` with `P(Poisson(lambda) <= k) >= u`; monotone in `lambda`.
fn poisson_inverse(lambda: f64, u: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut k = 0;
    while cdf < u && k < 1000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

impl SyntheticPredictor {
    pub fn new(dataset: Arc<Dataset>, params: SyntheticPredictorParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            dataset,
            params,
            models: HashMap::new(),
            next_id: 1,
        })
    }

    pub fn params(&self) -> &SyntheticPredictorParams {
        &self.params
    }

    fn stratum(&self, image_id: u64) -> &str {
        self.dataset
            .image(image_id)
            .and_then(|i| i.stratum.as_deref())
            .unwrap_or(UNTAGGED)
    }

    /// Skill of model `tag` on images of `stratum`.
    pub fn skill(&self, tag: &str, stratum: &str) -> Result<f64> {
        let model = self
            .models
            .get(tag)
            .ok_or_else(|| Error::UnknownTag(tag.to_string()))?;
        let n = model.per_stratum.get(stratum).copied().unwrap_or(0) as f64;
        Ok(n / (n + self.params.kappa_for(stratum)))
    }

    fn predict_image(
        &self,
        image_id: u64,
        skill: f64,
        passes: usize,
        stochastic: bool,
        seed: u64,
    ) -> Vec<Vec<Detection>> {
        let img = self.dataset.image(image_id).expect("checked by caller");
        let (w, h) = (img.width, img.height);
        let truth = self.dataset.boxes(image_id);
        let p = &self.params;
        let scale = p.noise_scale_for(self.stratum(image_id));
        let residual = 1.0 - skill;
        let p_det = p.detection_probability(skill);

        let mut offset_rng = rng_for(seed, &[IMAGE_OFFSET, image_id]);
        let image_offsets: Vec<[f64; 4]> = truth
            .iter()
            .map(|b| {
                let s = p.sigma_base * scale * residual * b.diagonal();
                [(); 4].map(|_| normal(&mut offset_rng) * s)
            })
            .collect();

        let typical_side = if truth.is_empty() {
            w.min(h) as f64 / 8.0
        } else {
            truth.iter().map(|b| (b.width() + b.height()) / 2.0).sum::<f64>() / truth.len() as f64
        };

        (0..passes)
            .map(|t| {
                let mut rng = if stochastic {
                    rng_for(seed, &[PASS, image_id, t as u64])
                } else {
                    rng_for(seed, &[EVAL_PASS, image_id])
                };
                let mut dets = Vec::new();
                for (b, base) in truth.iter().zip(&image_offsets) {
                    let found = unit_f64(&mut rng) < p_det;
                    let s = p.sigma_pass * scale * residual * b.diagonal();
                    let jitter = [(); 4].map(|_| normal(&mut rng) * s);
                    let conf = normal(&mut rng) * p.confidence_noise;
                    if !found {
                        continue;
                    }
                    let mut c = b.to_array();
                    for k in 0..4 {
                        c[k] += base[k] + if stochastic { jitter[k] } else { 0.0 };
                    }
                    let fg = (skill + conf).clamp(0.05, 0.99);
                    dets.extend(self.detection(c, fg, w, h));
                }
                let count = poisson_inverse(p.spurious_rate * residual, unit_f64(&mut rng));
                let mut srng = rng_for(seed, &[SPURIOUS, image_id, t as u64, stochastic as u64]);
                for _ in 0..count {
                    let bw = typical_side * (0.5 + unit_f64(&mut srng));
                    let bh = typical_side * (0.5 + unit_f64(&mut srng));
                    let x = unit_f64(&mut srng) * (w as f64 - bw).max(0.0);
                    let y = unit_f64(&mut srng) * (h as f64 - bh).max(0.0);
                    let fg = (0.3 + normal(&mut srng) * p.confidence_noise).clamp(0.05, 0.99);
                    dets.extend(self.detection([x, y, x + bw, y + bh], fg, w, h));
                }
                dets
            })
            .collect()
    }

    fn detection(&self, c: [f64; 4], fg: f64, w: u32, h: u32) -> Option<Detection> {
        let (x1, x2) = (c[0].min(c[2]), c[0].max(c[2]));
        let (y1, y2) = (c[1].min(c[3]), c[1].max(c[3]));
        // keep at least one pixel of extent
        let x2 = x2.max(x1 + 1.0);
        let y2 = y2.max(y1 + 1.0);
        let b = BoundingBox::new(x1, y1, x2, y2).ok()?.clip_to(w as f64, h as f64)?;
        let mask = ellipse_mask(&b, h, w).ok()?;
        Detection::new(b, Some(mask), vec![fg, 1.0 - fg]).ok()
    }
}

impl Predictor for SyntheticPredictor {
    fn health(&self) -> Result<HealthResponse> {
        Ok(HealthResponse {
            ok: true,
            mechanism: self.params.mechanism.clone(),
        })
    }

    fn train(&mut self, request: &TrainRequest) -> Result<TrainResponse> {
        if request.labeled.is_empty() {
            return Err(Error::InvalidArgument("labeled set must not be empty".into()));
        }
        let mut state = match &request.parent_tag {
            None => ModelState {
                seen: BTreeSet::new(),
                per_stratum: BTreeMap::new(),
            },
            Some(tag) => self
                .models
                .get(tag)
                .cloned()
                .ok_or_else(|| Error::UnknownTag(tag.clone()))?,
        };
        for item in &request.labeled {
            let img = self
                .dataset
                .image(item.image_id)
                .ok_or(Error::UnknownImage(item.image_id))?;
            if item.boxes.iter().any(|b| !b.within(img.width as f64, img.height as f64)) {
                return Err(Error::InvalidArgument(format!(
                    "image {}: box outside the image",
                    item.image_id
                )));
            }
        }
        for item in &request.labeled {
            if state.seen.insert(item.image_id) {
                let stratum = self.stratum(item.image_id).to_string();
                *state.per_stratum.entry(stratum).or_default() += 1;
            }
        }
        let tag = format!("syn-{:04}", self.next_id);
        self.next_id += 1;
        self.models.insert(tag.clone(), state);
        Ok(TrainResponse { model_tag: tag })
    }

    fn predict(&self, request: &PredictRequest) -> Result<PredictResponse> {
        if !self.models.contains_key(&request.model_tag) {
            return Err(Error::UnknownTag(request.model_tag.clone()));
        }
        if request.passes == 0 {
            return Err(Error::InvalidArgument("passes must be >= 1".into()));
        }
        let mut skills = Vec::with_capacity(request.image_ids.len());
        for &id in &request.image_ids {
            if self.dataset.image(id).is_none() {
                return Err(Error::UnknownImage(id));
            }
            skills.push(self.skill(&request.model_tag, self.stratum(id))?);
        }
        let passes = request.expected_passes();
        let results: Vec<_> = request
            .image_ids
            .par_iter()
            .zip(&skills)
            .map(|(&id, &s)| (id, self.predict_image(id, s, passes, request.stochastic, request.seed)))
            .collect();
        Ok(PredictResponse::from_ids(results))
    }
}
