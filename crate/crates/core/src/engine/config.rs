use serde::{Deserialize, Serialize};

use super::cost::BOX_TO_MASK_TIME_PERCENT;
use crate::predictors::SyntheticPredictorParams;
use crate::sampling::{StrategyConfig, StrategyKind};
use crate::uncertainty::{Aggregation, DEFAULT_IOU_THRESHOLD};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    /// Ground-truth boxes are revealed immediately.
    #[default]
    Simulated,
    /// Each round waits for annotations submitted through the service.
    Queued,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PredictorConfig {
    Builtin { params: SyntheticPredictorParams },
    External { url: String },
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig::Builtin {
            params: SyntheticPredictorParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub strategy: StrategyConfig,
    /// Rounds after the initial one.
    pub rounds: usize,
    pub initial_size: usize,
    pub passes: usize,
    pub iou_threshold: f64,
    pub aggregation: Aggregation,
    pub box_to_mask_time_percent: f64,
    pub oracle: OracleMode,
    pub predictor: PredictorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyConfig {
                kind: StrategyKind::McUncertainty,
                sample_size: 10,
                seed: 0,
            },
            rounds: 8,
            initial_size: 10,
            passes: 8,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            aggregation: Aggregation::Mean,
            box_to_mask_time_percent: BOX_TO_MASK_TIME_PERCENT,
            oracle: OracleMode::Simulated,
            predictor: PredictorConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn seed(&self) -> u64 {
        self.strategy.seed
    }

    pub fn sample_size(&self) -> usize {
        self.strategy.sample_size
    }

    /// Labeled count after the last round.
    pub fn final_labeled(&self) -> Option<usize> {
        self.rounds
            .checked_mul(self.sample_size())
            .and_then(|n| n.checked_add(self.initial_size))
    }

    pub fn validate(&self, pool_size: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        self.strategy.validate()?;
        if self.initial_size == 0 {
            return bad("initial_size must be >= 1".into());
        }
        match self.final_labeled() {
            Some(n) if n <= pool_size => {}
            _ => {
                return bad(format!(
                    "initial_size {} + rounds {} x sample_size {} exceeds the pool of {pool_size}",
                    self.initial_size,
                    self.rounds,
                    self.sample_size()
                ))
            }
        }
        if self.passes == 0 {
            return bad("passes must be >= 1".into());
        }
        if self.strategy.kind == StrategyKind::McUncertainty && self.passes < 2 {
            return bad("mc-uncertainty needs passes >= 2".into());
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return bad(format!("iou_threshold must be in (0, 1), got {}", self.iou_threshold));
        }
        if !(self.box_to_mask_time_percent.is_finite() && self.box_to_mask_time_percent >= 0.0) {
            return bad("box_to_mask_time_percent must be finite and >= 0".into());
        }
        match &self.predictor {
            PredictorConfig::Builtin { params } => params.validate()?,
            PredictorConfig::External { url } if url.is_empty() => {
                return bad("predictor url must not be empty".into())
            }
            PredictorConfig::External { .. } => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_budget() {
        let mut c = ExperimentConfig {
            rounds: 3,
            initial_size: 5,
            ..Default::default()
        };
        c.strategy.sample_size = 5;
        c.validate(20).unwrap();
        assert!(c.validate(19).is_err());
        c.rounds = usize::MAX;
        assert!(c.validate(20).is_err());
    }

    #[test]
    fn uncertainty_needs_two_passes() {
        let mut c = ExperimentConfig {
            passes: 1,
            ..Default::default()
        };
        assert!(c.validate(1000).is_err());
        c.strategy.kind = StrategyKind::Random;
        c.validate(1000).unwrap();
    }

    #[test]
    fn json_round_trip() {
        let c = ExperimentConfig {
            predictor: PredictorConfig::External {
                url: "http://127.0.0.1:9000".into(),
            },
            oracle: OracleMode::Queued,
            ..Default::default()
        };
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains(r#""kind":"external""#));
        assert!(text.contains(r#""kind":"mc-uncertainty""#));
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
    }
}
