use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Labeled/unlabeled partition of the training pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    labeled: BTreeSet<u64>,
    unlabeled: BTreeSet<u64>,
    round: usize,
}

impl PoolState {
    pub fn new(pool: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut unlabeled = BTreeSet::new();
        for id in pool {
            if !unlabeled.insert(id) {
                return Err(Error::InvalidArgument(format!("duplicate pool id {id}")));
            }
        }
        if unlabeled.is_empty() {
            return Err(Error::Empty("training pool"));
        }
        Ok(Self {
            labeled: BTreeSet::new(),
            unlabeled,
            round: 0,
        })
    }

    pub fn labeled(&self) -> &BTreeSet<u64> {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<u64> {
        &self.unlabeled
    }

    /// Number of completed rounds.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn size(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    /// Moves `ids` from unlabeled to labeled and closes the round. Nothing
    /// changes if any id is not currently unlabeled or appears twice.
    pub fn label(&mut self, ids: &[u64]) -> Result<()> {
        let mut batch = BTreeSet::new();
        for &id in ids {
            if !self.unlabeled.contains(&id) || !batch.insert(id) {
                return Err(Error::Invariant(format!(
                    "image {id} is not an unlabeled pool member"
                )));
            }
        }
        for id in batch {
            self.unlabeled.remove(&id);
            self.labeled.insert(id);
        }
        self.round += 1;
        Ok(())
    }
}
