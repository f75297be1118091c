//! Toy transformer-style encoder stacks and the unified retrieval-model view.
//!
//! A retrieval model is a pair of layer piles `(E1, E2)` plus a similarity
//! function. Three variants are supported: dual encoder (inner product of
//! final CLS vectors), late interaction (sum over query tokens of max token
//! similarity), and cross encoder (shared projection of the joint CLS).
//! Every variant exposes per-layer outputs so similarity can be scored at any
//! depth, including an optional appended linear projection that counts as one
//! more selectable layer.

mod config;
mod encoder;
mod params;
mod retrieval_model;
mod scoring;

pub use config::{ModelConfig, TokenSequence, Variant, CLS_ID, SEP_ID};
pub use params::{BoundParams, ParamEntry, ParamId, ParamSet};
pub use retrieval_model::{EncodedLayers, PoolEncoding, RetrievalModel, StackChoice};
pub use scoring::{score_cb, score_ce, score_de};
