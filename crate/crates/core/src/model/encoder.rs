//! Transformer-style encoder stack: embedding, then per block single-head
//! self-attention and a tanh feed-forward, each with residual connection and
//! layer normalization. Layer `i`'s output depends only on layers `<= i`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Tape, TensorId};
use crate::error::Result;
use crate::fmath;
use crate::model::config::{ModelConfig, TokenSequence};
use crate::model::params::{BoundParams, ParamId, ParamSet};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub(crate) struct BlockLayout {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderLayout {
    token_embedding: ParamId,
    position_embedding: ParamId,
    blocks: Vec<BlockLayout>,
}

const LN_GAIN_INIT: f64 = 0.5;

fn normal_matrix(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.normal_scaled(std)).collect()
}

impl EncoderLayout {
    /// Register all parameters for one stack under `prefix` and return the
    /// layout. Creation order is part of the checkpoint format.
    pub(crate) fn build(
        params: &mut ParamSet,
        prefix: &str,
        cfg: &ModelConfig,
        rng: &mut Rng,
    ) -> Self {
        let (d, ff) = (cfg.hidden_dim, cfg.ff_dim);
        let attn_std = 1.0 / fmath::sqrt(d as f64);
        let name = |suffix: String| format!("{prefix}.{suffix}");

        let token_embedding = params.add(
            name("token_embedding".into()),
            vec![cfg.vocab_size, d],
            normal_matrix(rng, cfg.vocab_size, d, 0.5),
        );
        let position_embedding = params.add(
            name("position_embedding".into()),
            vec![cfg.max_len, d],
            normal_matrix(rng, cfg.max_len, d, 0.5),
        );

        let blocks = (0..cfg.num_layers)
            .map(|b| BlockLayout {
                wq: params.add(name(format!("block{b}.wq")), vec![d, d], normal_matrix(rng, d, d, attn_std)),
                wk: params.add(name(format!("block{b}.wk")), vec![d, d], normal_matrix(rng, d, d, attn_std)),
                wv: params.add(name(format!("block{b}.wv")), vec![d, d], normal_matrix(rng, d, d, attn_std)),
                wo: params.add(name(format!("block{b}.wo")), vec![d, d], normal_matrix(rng, d, d, attn_std)),
                ln1_gain: params.add(name(format!("block{b}.ln1_gain")), vec![d], vec![LN_GAIN_INIT; d]),
                ln1_bias: params.add(name(format!("block{b}.ln1_bias")), vec![d], vec![0.0; d]),
                w1: params.add(name(format!("block{b}.w1")), vec![d, ff], normal_matrix(rng, d, ff, attn_std)),
                b1: params.add(name(format!("block{b}.b1")), vec![ff], vec![0.0; ff]),
                w2: params.add(
                    name(format!("block{b}.w2")),
                    vec![ff, d],
                    normal_matrix(rng, ff, d, 1.0 / fmath::sqrt(ff as f64)),
                ),
                b2: params.add(name(format!("block{b}.b2")), vec![d], vec![0.0; d]),
                ln2_gain: params.add(name(format!("block{b}.ln2_gain")), vec![d], vec![LN_GAIN_INIT; d]),
                ln2_bias: params.add(name(format!("block{b}.ln2_bias")), vec![d], vec![0.0; d]),
            })
            .collect();

        EncoderLayout {
            token_embedding,
            position_embedding,
            blocks,
        }
    }

    /// Forward pass recording onto `tape`; returns one `(len, d)` node per
    /// block, in depth order.
    pub(crate) fn encode(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        cfg: &ModelConfig,
        seq: &TokenSequence,
    ) -> Result<Vec<TensorId>> {
        seq.check_against(cfg)?;
        let ids: Vec<usize> = seq.ids().iter().map(|&id| id as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let scale = 1.0 / fmath::sqrt(cfg.hidden_dim as f64);

        let tok = tape.gather(bound.id(self.token_embedding), &ids);
        let pos = tape.gather(bound.id(self.position_embedding), &positions);
        let mut x = tape.add(tok, pos);

        let mut outputs = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            // Single-head self-attention with residual + layer norm.
            let q = tape.matmul(x, bound.id(block.wq));
            let k = tape.matmul(x, bound.id(block.wk));
            let v = tape.matmul(x, bound.id(block.wv));
            let logits = tape.matmul_nt(q, k);
            let logits = tape.scale(logits, scale);
            let attn = tape.row_softmax(logits);
            let ctx = tape.matmul(attn, v);
            let proj = tape.matmul(ctx, bound.id(block.wo));
            let res1 = tape.add(x, proj);
            let normed1 = tape.layer_norm(res1, bound.id(block.ln1_gain), bound.id(block.ln1_bias));

            // Feed-forward with residual + layer norm.
            let pre = tape.matmul(normed1, bound.id(block.w1));
            let pre = tape.add_row(pre, bound.id(block.b1));
            let hidden = tape.tanh(pre);
            let ff = tape.matmul(hidden, bound.id(block.w2));
            let ff = tape.add_row(ff, bound.id(block.b2));
            let res2 = tape.add(normed1, ff);
            x = tape.layer_norm(res2, bound.id(block.ln2_gain), bound.id(block.ln2_bias));
            outputs.push(x);
        }
        Ok(outputs)
    }
}
