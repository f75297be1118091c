//! Exact inner-product search over a flat embedding matrix.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

/// Brute-force inner-product index: ids plus a row-major embedding matrix.
/// Search is exact; no approximation anywhere.
#[derive(Debug, Clone)]
pub struct FlatIndex {
    dim: usize,
    ids: Vec<String>,
    embeddings: Vec<f64>,
}

/// Heap entry ordered worst-first: lower score (or later id on ties) is
/// "greater" so the max-heap exposes the current worst candidate at the top.
struct WorstFirst {
    score: f64,
    idx: usize,
    id_rank: usize,
}

impl PartialEq for WorstFirst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for WorstFirst {}
impl PartialOrd for WorstFirst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for WorstFirst {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .expect("index scores are finite")
            .then_with(|| self.id_rank.cmp(&other.id_rank))
    }
}

impl FlatIndex {
    pub fn new(dim: usize) -> Self {
        FlatIndex {
            dim,
            ids: Vec::new(),
            embeddings: Vec::new(),
        }
    }

    pub fn add(&mut self, id: impl Into<String>, embedding: &[f64]) -> Result<()> {
        if embedding.len() != self.dim {
            return Err(Error::invalid_input(alloc::format!(
                "embedding dim {} does not match index dim {}",
                embedding.len(),
                self.dim
            )));
        }
        if embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_input("non-finite embedding"));
        }
        self.ids.push(id.into());
        self.embeddings.extend_from_slice(embedding);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn embedding(&self, row: usize) -> &[f64] {
        &self.embeddings[row * self.dim..(row + 1) * self.dim]
    }

    /// Exact top-k by inner product, ties broken by ascending passage id.
    /// Asking for more than the corpus returns the full ranking.
    pub fn search_top_k(&self, query: &[f64], k: usize) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::invalid_parameter("k must be positive"));
        }
        if query.len() != self.dim {
            return Err(Error::invalid_input(alloc::format!(
                "query dim {} does not match index dim {}",
                query.len(),
                self.dim
            )));
        }
        let k = k.min(self.len());
        // id_rank turns lexicographic tie-breaking into integer comparisons.
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.ids[a].cmp(&self.ids[b]));
        let mut id_rank = alloc::vec![0usize; self.len()];
        for (rank, &idx) in order.iter().enumerate() {
            id_rank[idx] = rank;
        }

        let mut heap: BinaryHeap<WorstFirst> = BinaryHeap::with_capacity(k + 1);
        for idx in 0..self.len() {
            let row = self.embedding(idx);
            let mut score = 0.0;
            for (q, e) in query.iter().zip(row) {
                score += q * e;
            }
            heap.push(WorstFirst {
                score,
                idx,
                id_rank: id_rank[idx],
            });
            if heap.len() > k {
                heap.pop();
            }
        }
        let mut hits: Vec<WorstFirst> = heap.into_vec();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("finite")
                .then_with(|| a.id_rank.cmp(&b.id_rank))
        });
        Ok(hits
            .into_iter()
            .map(|h| (self.ids[h.idx].clone(), h.score))
            .collect())
    }
}
