use serde::{Deserialize, Serialize};

use crate::rng::{rng_for, unit_f64};
use crate::{Error, Result};

/// Parameters of one DropBlock layer on a square feature grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropBlockParams {
    pub drop_prob: f64,
    pub block_size: usize,
    pub feature_size: usize,
}

impl Default for DropBlockParams {
    fn default() -> Self {
        Self {
            drop_prob: 0.25,
            block_size: 7,
            feature_size: 64,
        }
    }
}

impl DropBlockParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.drop_prob > 0.0 && self.drop_prob < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "drop_prob must be in (0, 1), got {}",
                self.drop_prob
            )));
        }
        if self.block_size == 0 || self.block_size % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "block_size must be odd and positive, got {}",
                self.block_size
            )));
        }
        if self.feature_size == 0 {
            return Err(Error::InvalidArgument("feature_size must be positive".into()));
        }
        if self.block_size > self.feature_size {
            return Err(Error::InvalidArgument(format!(
                "block_size {} exceeds feature_size {}",
                self.block_size, self.feature_size
            )));
        }
        Ok(())
    }

    /// Seed rate `p / b² · f² / (f − b + 1)²`.
    pub fn gamma(&self) -> f64 {
        let b = self.block_size as f64;
        let f = self.feature_size as f64;
        self.drop_prob / (b * b) * (f * f) / ((f - b + 1.0) * (f - b + 1.0))
    }
}

/// Keep-mask over the feature grid, row-major (`true` = kept).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropBlockMask {
    size: usize,
    keep: Vec<bool>,
}

impl DropBlockMask {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn kept(&self, row: usize, col: usize) -> bool {
        self.keep[row * self.size + col]
    }

    pub fn kept_fraction(&self) -> f64 {
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len() as f64
    }
}

/// Samples a DropBlock keep-mask.
///
/// Every grid cell is an independent Bernoulli(γ) block seed; each seed
/// zeroes the `block_size` square centred on it, clipped to the grid.
pub fn dropblock_mask(params: &DropBlockParams, seed: u64) -> Result<DropBlockMask> {
    params.validate()?;
    let n = params.feature_size;
    let half = params.block_size / 2;
    let gamma = params.gamma();
    let mut rng = rng_for(seed, &[0xD80B]);
    let mut keep = vec![true; n * n];
    for r in 0..n {
        for c in 0..n {
            if unit_f64(&mut rng) < gamma {
                for rr in r.saturating_sub(half)..(r + half + 1).min(n) {
                    keep[rr * n..(rr * n + n)][c.saturating_sub(half)..(c + half + 1).min(n)]
                        .fill(false);
                }
            }
        }
    }
    Ok(DropBlockMask { size: n, keep })
}
