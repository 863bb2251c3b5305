//! Query strategies that choose the next batch of images to annotate.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::{rng_for, uniform_below};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Random,
    McUncertainty,
}

impl StrategyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::McUncertainty => "mc-uncertainty",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(StrategyKind::Random),
            "mc-uncertainty" | "mc_uncertainty" => Ok(StrategyKind::McUncertainty),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy {other:?} (expected random or mc-uncertainty)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub sample_size: usize,
    pub seed: u64,
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_size == 0 {
            return Err(Error::InvalidArgument("sample_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draws `n` distinct ids without replacement.
///
/// Partial Fisher–Yates over a copy of `pool_ids` in the given order, with
/// swap positions from [`uniform_below`] on a ChaCha8 stream seeded by
/// `seed`. The result depends only on the pool order, `n` and `seed`.
pub fn sample_random(pool_ids: &[u64], n: usize, seed: u64) -> Result<Vec<u64>> {
    if n > pool_ids.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: pool_ids.len(),
        });
    }
    let mut ids = pool_ids.to_vec();
    let mut rng = rng_for(seed, &[]);
    for i in 0..n {
        let j = i + uniform_below(&mut rng, (ids.len() - i) as u64) as usize;
        ids.swap(i, j);
    }
    ids.truncate(n);
    Ok(ids)
}

/// The `n` most uncertain ids, ordered by descending score then ascending id.
pub fn sample_top_uncertainty<'a, I>(scores: I, n: usize) -> Result<Vec<u64>>
where
    I: IntoIterator<Item = (&'a u64, &'a f64)>,
{
    let mut ranked: Vec<(u64, f64)> = Vec::new();
    let mut seen = HashSet::new();
    for (&id, &score) in scores {
        if score.is_nan() {
            return Err(Error::InvalidArgument(format!("uncertainty for image {id} is NaN")));
        }
        if !seen.insert(id) {
            return Err(Error::InvalidArgument(format!("duplicate image id {id}")));
        }
        ranked.push((id, score));
    }
    if n > ranked.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: ranked.len(),
        });
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().take(n).map(|(id, _)| id).collect())
}
