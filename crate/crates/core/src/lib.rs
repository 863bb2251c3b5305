//! Active-learning orchestration for box-supervised cell segmentation.
//!
//! The crate is organised around the sample → annotate → train → evaluate
//! loop:
//!
//! - [`geometry`]: boxes, run-length encoded masks, IoU and Dice.
//! - [`uncertainty`]: instance-set formation across stochastic passes and the
//!   class/box/mask certainty coefficients.
//! - [`sampling`]: random and uncertainty-driven query strategies.
//! - [`predictors`]: the predictor wire protocol, a synthetic stochastic
//!   predictor and a DropBlock mask generator.
//! - [`engine`]: pool bookkeeping, the round lifecycle, evaluation and
//!   annotation cost accounting.
//! - [`data_io`]: dataset manifests, synthetic dataset generation and reports.

pub mod data_io;
pub mod engine;
mod error;
pub mod geometry;
pub mod predictors;
pub mod rng;
pub mod sampling;
pub mod uncertainty;

pub use error::{Error, Result};
