//! The active-learning loop.
//!
//! Round 0 draws `initial_size` images at random, has them annotated, trains
//! and evaluates. Every later round scores the unlabeled pool with the
//! configured strategy, draws `sample_size` images, has them annotated,
//! retrains on everything labeled so far (warm-started from the previous
//! model tag) and evaluates on the test split.
//!
//! [`Experiment`] exposes the round as two steps, [`Experiment::draw_batch`]
//! and [`Experiment::complete_round`], so a human oracle can sit between
//! them. [`run_experiment`] drives both steps with an [`Oracle`].
//!
//! Random streams are derived from the experiment seed: the initial draw
//! uses the seed itself, round `r` draws from `[ROUND, r]`, stochastic
//! scoring from `[SCORE, r]`, and every evaluation uses one fixed `[EVAL]`
//! seed so that rounds and strategies are compared on the same noise.

mod config;
mod cost;
mod evaluate;
mod pool;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

pub use config::{ExperimentConfig, OracleMode, PredictorConfig};
pub use cost::{annotation_cost, round_to, BOX_TO_MASK_TIME_PERCENT};
pub use evaluate::{evaluate_dsc, image_dsc};
pub use pool::PoolState;

pub use crate::data_io::{ExperimentReport, RoundRecord};
use crate::data_io::Dataset;
use crate::geometry::BoundingBox;
use crate::predictors::{LabeledImage, PredictRequest, PredictResponse, Predictor, TrainRequest};
use crate::rng::derive_seed;
use crate::sampling::{sample_random, sample_top_uncertainty, StrategyKind};
use crate::uncertainty::score_image;
use crate::{Error, Result};

const ROUND: u64 = 1;
const SCORE: u64 = 2;
const EVAL: u64 = 3;

/// Oracle annotations: ground-truth-style boxes per image.
pub type Annotations = BTreeMap<u64, Vec<BoundingBox>>;

pub trait Oracle {
    fn annotate(&mut self, image_ids: &[u64]) -> Result<Annotations>;
}

/// Reveals ground-truth boxes (never masks).
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    dataset: Arc<Dataset>,
}

impl SimulatedOracle {
    pub fn new(dataset: Arc<Dataset>) -> Self {
        Self { dataset }
    }
}

impl Oracle for SimulatedOracle {
    fn annotate(&mut self, image_ids: &[u64]) -> Result<Annotations> {
        image_ids
            .iter()
            .map(|&id| {
                self.dataset.image(id).ok_or(Error::UnknownImage(id))?;
                Ok((id, self.dataset.boxes(id)))
            })
            .collect()
    }
}

/// Checks that boxes lie inside image `id`; errors name the offending box.
pub fn validate_boxes(dataset: &Dataset, id: u64, boxes: &[BoundingBox]) -> Result<()> {
    let img = dataset.image(id).ok_or(Error::UnknownImage(id))?;
    for (i, b) in boxes.iter().enumerate() {
        if !b.within(img.width as f64, img.height as f64) {
            return Err(Error::InvalidArgument(format!(
                "boxes[{i}]: {:?} exceeds image {id} ({}x{})",
                b.to_array(),
                img.width,
                img.height
            )));
        }
    }
    Ok(())
}

pub struct Experiment<P> {
    config: ExperimentConfig,
    dataset: Arc<Dataset>,
    predictor: P,
    pool: PoolState,
    model_tag: Option<String>,
    annotations: Annotations,
    pending: Option<Vec<u64>>,
    pending_ms: u64,
    records: Vec<RoundRecord>,
    timings: Vec<u64>,
}

impl<P: Predictor> Experiment<P> {
    pub fn new(config: ExperimentConfig, dataset: Arc<Dataset>, predictor: P) -> Result<Self> {
        let pool = PoolState::new(dataset.train_ids().iter().copied())?;
        config.validate(pool.size())?;
        Ok(Self {
            config,
            dataset,
            predictor,
            pool,
            model_tag: None,
            annotations: Annotations::new(),
            pending: None,
            pending_ms: 0,
            records: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn predictor(&self) -> &P {
        &self.predictor
    }

    pub fn pool(&self) -> &PoolState {
        &self.pool
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn model_tag(&self) -> Option<&str> {
        self.model_tag.as_deref()
    }

    /// Index of the round in progress (equals the number of records).
    pub fn round(&self) -> usize {
        self.records.len()
    }

    /// The batch drawn for the current round, if any.
    pub fn pending(&self) -> Option<&[u64]> {
        self.pending.as_deref()
    }

    pub fn is_finished(&self) -> bool {
        self.records.len() > self.config.rounds
    }

    pub fn report(&self, dataset_label: impl Into<String>) -> ExperimentReport {
        ExperimentReport {
            dataset: dataset_label.into(),
            config: self.config.clone(),
            rows: self.records.clone(),
            wall_clock_ms: self.timings.clone(),
        }
    }

    /// Chooses the images to annotate this round. Calling it again before
    /// the round completes returns the same batch.
    pub fn draw_batch(&mut self) -> Result<Vec<u64>> {
        if self.is_finished() {
            return Err(Error::Finished);
        }
        if let Some(batch) = &self.pending {
            return Ok(batch.clone());
        }
        let start = Instant::now();
        let round = self.round();
        let seed = self.config.seed();
        let batch = if round == 0 {
            sample_random(self.dataset.train_ids(), self.config.initial_size, seed)?
        } else {
            let n = self.config.sample_size();
            match self.config.strategy.kind {
                StrategyKind::Random => {
                    let pool: Vec<u64> = self.pool.unlabeled().iter().copied().collect();
                    sample_random(&pool, n, derive_seed(seed, &[ROUND, round as u64]))?
                }
                StrategyKind::McUncertainty => {
                    let scores = self.score_pool()?;
                    sample_top_uncertainty(&scores, n)?
                }
            }
        };
        self.pending = Some(batch.clone());
        self.pending_ms = start.elapsed().as_millis() as u64;
        Ok(batch)
    }

    /// Image uncertainty of every unlabeled image under the current model.
    pub fn score_pool(&self) -> Result<BTreeMap<u64, f64>> {
        let tag = self
            .model_tag
            .clone()
            .ok_or_else(|| Error::Invariant("no model has been trained yet".into()))?;
        let ids: Vec<u64> = self.pool.unlabeled().iter().copied().collect();
        let request = PredictRequest {
            model_tag: tag,
            image_ids: ids.clone(),
            passes: self.config.passes,
            stochastic: true,
            seed: derive_seed(self.config.seed(), &[SCORE, self.round() as u64]),
        };
        let response = self.predict(&request)?;
        let m = self.dataset.class_count();
        let (iou, aggregation) = (self.config.iou_threshold, self.config.aggregation);
        let scored: Vec<(u64, f64)> = ids
            .par_iter()
            .map(|&id| {
                let passes = response.passes(id)?;
                let u = score_image(&passes, m, iou, aggregation)?;
                Ok((id, u))
            })
            .collect::<Result<_>>()?;
        Ok(scored.into_iter().collect())
    }

    fn predict(&self, request: &PredictRequest) -> Result<PredictResponse> {
        let response = self.predictor.predict(request)?;
        response.check_against(request, |id| self.dataset.image(id).map(|i| (i.height, i.width)))?;
        Ok(response)
    }

    /// Trains on all labeled images plus `annotations` for the pending
    /// batch, evaluates, and records the round. State only changes if every
    /// step succeeds.
    pub fn complete_round(&mut self, annotations: Annotations) -> Result<RoundRecord> {
        let batch = self
            .pending
            .clone()
            .ok_or_else(|| Error::Invariant("no batch has been drawn for this round".into()))?;
        let start = Instant::now();
        let expected: Vec<u64> = {
            let mut b = batch.clone();
            b.sort_unstable();
            b
        };
        if !annotations.keys().copied().eq(expected.iter().copied()) {
            return Err(Error::InvalidArgument(format!(
                "annotations must cover exactly the batch {expected:?}"
            )));
        }
        for (&id, boxes) in &annotations {
            validate_boxes(&self.dataset, id, boxes)?;
        }

        let mut labeled = self.annotations.clone();
        labeled.extend(annotations);
        let category = self.dataset.default_category();
        let request = TrainRequest {
            parent_tag: self.model_tag.clone(),
            labeled: labeled
                .iter()
                .map(|(&image_id, boxes)| LabeledImage {
                    image_id,
                    boxes: boxes.clone(),
                    category_ids: vec![category; boxes.len()],
                })
                .collect(),
        };
        let tag = self.predictor.train(&request)?.model_tag;
        let dsc = self.evaluate(&tag)?;

        let mut pool = self.pool.clone();
        pool.label(&batch)?;
        let round = self.round();
        let labeled_count = pool.labeled().len();
        let record = RoundRecord {
            round,
            sampled_ids: batch,
            labeled_count,
            labeled_fraction: labeled_count as f64 / pool.size() as f64,
            dsc,
            cost_percent: annotation_cost(
                labeled_count,
                pool.size(),
                self.config.box_to_mask_time_percent,
            )?,
            strategy: self.config.strategy.kind,
            seed: self.config.seed(),
        };

        self.pool = pool;
        self.annotations = labeled;
        self.model_tag = Some(tag);
        self.pending = None;
        self.records.push(record.clone());
        self.timings
            .push(self.pending_ms + start.elapsed().as_millis() as u64);
        Ok(record)
    }

    fn evaluate(&self, tag: &str) -> Result<f64> {
        let test = self.dataset.test_ids();
        let request = PredictRequest {
            model_tag: tag.to_string(),
            image_ids: test.to_vec(),
            passes: 1,
            stochastic: false,
            seed: derive_seed(self.config.seed(), &[EVAL]),
        };
        let response = self.predict(&request)?;
        let mut predictions = BTreeMap::new();
        for &id in test {
            let pass = response.passes(id)?.into_iter().next();
            predictions.insert(id, pass.map(|p| p.detections).unwrap_or_default());
        }
        evaluate_dsc(&predictions, &self.dataset, test)
    }
}

/// A run that stopped early; `report` holds the rounds completed so far.
#[derive(Debug)]
pub struct Aborted {
    pub report: ExperimentReport,
    pub error: Error,
}

/// Runs every round with `oracle` answering each batch.
pub fn run_experiment<P: Predictor, O: Oracle>(
    config: ExperimentConfig,
    dataset: Arc<Dataset>,
    dataset_label: &str,
    predictor: P,
    oracle: &mut O,
) -> std::result::Result<ExperimentReport, Aborted> {
    let mut experiment = match Experiment::new(config.clone(), dataset, predictor) {
        Ok(e) => e,
        Err(error) => {
            return Err(Aborted {
                report: ExperimentReport {
                    dataset: dataset_label.to_string(),
                    config,
                    rows: Vec::new(),
                    wall_clock_ms: Vec::new(),
                },
                error,
            })
        }
    };
    while !experiment.is_finished() {
        let step = experiment
            .draw_batch()
            .and_then(|batch| oracle.annotate(&batch))
            .and_then(|ann| experiment.complete_round(ann));
        if let Err(error) = step {
            return Err(Aborted {
                report: experiment.report(dataset_label),
                error,
            });
        }
    }
    Ok(experiment.report(dataset_label))
}
