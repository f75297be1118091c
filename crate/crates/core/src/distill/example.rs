//! Training examples: a query with positive and negative passage pools.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::TokenSequence;

/// One training example. The pool is the positives followed by the
/// negatives; the label is one-hot at the first positive.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub query: TokenSequence,
    pub positives: Vec<TokenSequence>,
    pub negatives: Vec<TokenSequence>,
}

impl TrainExample {
    pub fn new(
        query: TokenSequence,
        positives: Vec<TokenSequence>,
        negatives: Vec<TokenSequence>,
    ) -> Result<Self> {
        if positives.is_empty() {
            return Err(Error::invalid_input("example needs at least one positive"));
        }
        Ok(TrainExample {
            query,
            positives,
            negatives,
        })
    }

    pub fn pool_len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    /// Positives followed by negatives.
    pub fn pool(&self) -> impl Iterator<Item = &TokenSequence> {
        self.positives.iter().chain(self.negatives.iter())
    }

    /// Indices of the positives within the pool.
    pub fn positive_indices(&self) -> Vec<usize> {
        (0..self.positives.len()).collect()
    }

    /// One-hot label over a pool of `pool_len` entries (first positive).
    pub fn label_one_hot(&self, pool_len: usize) -> Vec<f64> {
        let mut y = vec![0.0; pool_len];
        y[0] = 1.0;
        y
    }
}
