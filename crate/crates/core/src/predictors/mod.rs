//! The predictor boundary.
//!
//! Anything that can train on box annotations and return box + mask
//! predictions over several stochastic passes implements [`Predictor`]. The
//! crate ships [`SyntheticPredictor`], a simulation whose cross-pass
//! disagreement shrinks as it sees more labeled images, and a DropBlock mask
//! generator describing the feature-dropping mechanism real adapters use.

mod builtin;
mod dropblock;
pub mod protocol;

use serde::{Deserialize, Serialize};

pub use builtin::{SyntheticPredictor, SyntheticPredictorParams};
pub use dropblock::{dropblock_mask, DropBlockMask, DropBlockParams};
pub use protocol::{
    HealthResponse, LabeledImage, PredictRequest, PredictResponse, TrainRequest, TrainResponse,
};

use crate::Result;

/// A trained model state and the state it was warm-started from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTag {
    pub tag: String,
    pub parent: Option<String>,
}

pub trait Predictor: Send {
    fn health(&self) -> Result<HealthResponse>;

    fn train(&mut self, request: &TrainRequest) -> Result<TrainResponse>;

    fn predict(&self, request: &PredictRequest) -> Result<PredictResponse>;
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn health(&self) -> Result<HealthResponse> {
        (**self).health()
    }

    fn train(&mut self, request: &TrainRequest) -> Result<TrainResponse> {
        (**self).train(request)
    }

    fn predict(&self, request: &PredictRequest) -> Result<PredictResponse> {
        (**self).predict(request)
    }
}
