//! Layer features: per-layer similarity distributions over a candidate pool.

use alloc::vec::Vec;

use crate::autodiff::softmax_with_temperature;
use crate::distill::example::TrainExample;
use crate::error::Result;
use crate::model::RetrievalModel;

/// The similarity distribution of one query's pool at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFeature {
    pub layer_index: usize,
    pub dist: Vec<f64>,
}

/// Tempered distribution over raw pool scores: `softmax(scores / tau)`.
pub fn feature_from_scores(scores: &[f64], tau: f64) -> Result<Vec<f64>> {
    softmax_with_temperature(scores, tau)
}

/// Layer feature of `example`'s pool under `model` at a 1-based layer index.
pub fn layer_feature(
    model: &RetrievalModel,
    layer: usize,
    example: &TrainExample,
    tau: f64,
) -> Result<LayerFeature> {
    let mut scores = Vec::with_capacity(example.pool_len());
    for passage in example.pool() {
        scores.push(model.layer_score(layer, &example.query, passage)?);
    }
    Ok(LayerFeature {
        layer_index: layer,
        dist: feature_from_scores(&scores, tau)?,
    })
}
