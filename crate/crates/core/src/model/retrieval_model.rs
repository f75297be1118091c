//! The unified retrieval model: a variant tag, one or two encoder stacks, an
//! optional shared projection vector, and an optional appended linear layer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::fmath;
use crate::model::config::{ModelConfig, TokenSequence, Variant, CLS_ID, SEP_ID};
use crate::model::encoder::EncoderLayout;
use crate::model::params::{BoundParams, ParamId, ParamSet};
use crate::rng::Rng;

#[derive(Debug, Clone)]
struct AppendedLayout {
    weight: ParamId,
    bias: ParamId,
}

/// Which encoder stack to address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackChoice {
    E1,
    E2,
}

/// Per-layer representation nodes for one encoded sequence.
#[derive(Debug, Clone)]
pub struct EncodedLayers {
    layers: Vec<TensorId>,
    appended: Option<TensorId>,
}

impl EncodedLayers {
    /// Number of addressable layers, counting the appended projection.
    pub fn depth(&self) -> usize {
        self.layers.len() + usize::from(self.appended.is_some())
    }

    /// Representation node at a 1-based layer index.
    pub fn at(&self, layer: usize) -> TensorId {
        assert!(layer >= 1 && layer <= self.depth(), "layer {layer} out of range");
        if layer <= self.layers.len() {
            self.layers[layer - 1]
        } else {
            self.appended.expect("appended layer addressed but absent")
        }
    }

    pub fn top(&self) -> TensorId {
        self.at(self.depth())
    }
}

/// Encodings of one query against a passage pool, shared where the variant
/// allows: separate stacks encode the query once, the cross encoder holds one
/// joint encoding per pair.
#[derive(Debug, Clone)]
pub struct PoolEncoding {
    query: Option<EncodedLayers>,
    per_passage: Vec<EncodedLayers>,
}

impl PoolEncoding {
    pub fn pool_len(&self) -> usize {
        self.per_passage.len()
    }
}

#[derive(Debug, Clone)]
pub struct RetrievalModel {
    config: ModelConfig,
    params: ParamSet,
    e1: EncoderLayout,
    e2: Option<EncoderLayout>,
    /// Shared projection vector of the cross encoder.
    ce_projection: Option<ParamId>,
    appended: Option<AppendedLayout>,
}

impl RetrievalModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let mut rng = Rng::seed_from(config.seed);
        let mut params = ParamSet::new();
        let e1 = EncoderLayout::build(&mut params, "e1", &config, &mut rng);
        let (e2, ce_projection) = match config.variant {
            Variant::De | Variant::Cb => (
                Some(EncoderLayout::build(&mut params, "e2", &config, &mut rng)),
                None,
            ),
            Variant::Ce => {
                let std = 1.0 / fmath::sqrt(d as f64);
                let w = params.add(
                    "w",
                    vec![d],
                    (0..d).map(|_| rng.normal_scaled(std)).collect(),
                );
                (None, Some(w))
            }
        };
        let appended = if config.appended_projection {
            // Identity start so the appended layer initially passes final
            // representations through unchanged.
            let mut eye = vec![0.0; d * d];
            for i in 0..d {
                eye[i * d + i] = 1.0;
            }
            let weight = params.add("appended.weight", vec![d, d], eye);
            let bias = params.add("appended.bias", vec![d], vec![0.0; d]);
            Some(AppendedLayout { weight, bias })
        } else {
            None
        };
        Ok(RetrievalModel {
            config,
            params,
            e1,
            e2,
            ce_projection,
            appended,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    /// Selectable layer count: blocks plus the appended projection if present.
    pub fn effective_layers(&self) -> usize {
        self.config.num_layers + usize::from(self.appended.is_some())
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        self.params.bind(tape)
    }

    fn stack(&self, which: StackChoice) -> Result<&EncoderLayout> {
        match which {
            StackChoice::E1 => Ok(&self.e1),
            StackChoice::E2 => self.e2.as_ref().ok_or_else(|| {
                Error::invalid_input("cross encoder has no second stack: E2 is the projection")
            }),
        }
    }

    /// Encode one sequence through a stack, appending the projected final
    /// representation when the model carries an appended layer.
    pub fn encode_stack_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        which: StackChoice,
        seq: &TokenSequence,
    ) -> Result<EncodedLayers> {
        let layers = self.stack(which)?.encode(tape, bound, &self.config, seq)?;
        let appended = match &self.appended {
            Some(proj) => {
                let last = *layers.last().expect("at least one block");
                let mapped = tape.matmul(last, bound.id(proj.weight));
                Some(tape.add_row(mapped, bound.id(proj.bias)))
            }
            None => None,
        };
        Ok(EncodedLayers { layers, appended })
    }

    /// Joint input for the cross encoder: `[CLS] query [SEP] passage`.
    pub fn joint_sequence(query: &TokenSequence, passage: &TokenSequence) -> Result<TokenSequence> {
        let mut ids = Vec::with_capacity(query.len() + passage.len() + 2);
        ids.push(CLS_ID);
        ids.extend_from_slice(query.content());
        ids.push(SEP_ID);
        ids.extend_from_slice(passage.content());
        TokenSequence::new(ids)
    }

    /// Encode a query and its pool for later per-layer scoring.
    pub fn encode_pool_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        query: &TokenSequence,
        pool: &[&TokenSequence],
    ) -> Result<PoolEncoding> {
        if pool.is_empty() {
            return Err(Error::invalid_input("empty passage pool"));
        }
        match self.config.variant {
            Variant::De | Variant::Cb => {
                let q = self.encode_stack_graph(tape, bound, StackChoice::E1, query)?;
                let per_passage = pool
                    .iter()
                    .map(|p| self.encode_stack_graph(tape, bound, StackChoice::E2, p))
                    .collect::<Result<Vec<_>>>()?;
                Ok(PoolEncoding {
                    query: Some(q),
                    per_passage,
                })
            }
            Variant::Ce => {
                let per_passage = pool
                    .iter()
                    .map(|p| {
                        let joint = Self::joint_sequence(query, p)?;
                        self.encode_stack_graph(tape, bound, StackChoice::E1, &joint)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(PoolEncoding {
                    query: None,
                    per_passage,
                })
            }
        }
    }

    /// Similarity score nodes of every pool item at a 1-based layer index.
    pub fn pool_scores_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        enc: &PoolEncoding,
        layer: usize,
    ) -> Result<Vec<TensorId>> {
        self.check_layer(layer)?;
        match self.config.variant {
            Variant::De => {
                let q = enc.query.as_ref().expect("separate encoding");
                let q_cls = tape.row(q.at(layer), 0);
                Ok(enc
                    .per_passage
                    .iter()
                    .map(|p| {
                        let p_cls = tape.row(p.at(layer), 0);
                        tape.dot(q_cls, p_cls)
                    })
                    .collect())
            }
            Variant::Cb => {
                let q = enc.query.as_ref().expect("separate encoding");
                // Intermediate layers optionally fall back to CLS scoring;
                // the top layer is always the faithful response function.
                let cls_only = self.config.cb_cls_features && layer < self.effective_layers();
                if cls_only {
                    let q_cls = tape.row(q.at(layer), 0);
                    Ok(enc
                        .per_passage
                        .iter()
                        .map(|p| {
                            let p_cls = tape.row(p.at(layer), 0);
                            tape.dot(q_cls, p_cls)
                        })
                        .collect())
                } else {
                    let q_tokens = q.at(layer);
                    Ok(enc
                        .per_passage
                        .iter()
                        .map(|p| {
                            let sims = tape.matmul_nt(q_tokens, p.at(layer));
                            let maxes = tape.row_max(sims);
                            tape.sum_all(maxes)
                        })
                        .collect())
                }
            }
            Variant::Ce => {
                let w = bound.id(self.ce_projection.expect("cross encoder projection"));
                Ok(enc
                    .per_passage
                    .iter()
                    .map(|joint| {
                        let cls = tape.row(joint.at(layer), 0);
                        tape.dot(cls, w)
                    })
                    .collect())
            }
        }
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.effective_layers() {
            return Err(Error::invalid_input(format!(
                "layer index {layer} outside [1, {}]",
                self.effective_layers()
            )));
        }
        Ok(())
    }

    fn scratch(&self) -> (Tape, BoundParams) {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        (tape, bound)
    }

    /// Per-layer representations of one sequence as plain values.
    pub fn encode_all_layers(&self, which: StackChoice, seq: &TokenSequence) -> Result<Vec<Tensor>> {
        let (mut tape, bound) = self.scratch();
        let layers = self.stack(which)?.encode(&mut tape, &bound, &self.config, seq)?;
        Ok(layers.into_iter().map(|id| tape.value(id).clone()).collect())
    }

    /// Similarity of `(query, passage)` at a 1-based layer index.
    pub fn layer_score(&self, layer: usize, query: &TokenSequence, passage: &TokenSequence) -> Result<f64> {
        self.check_layer(layer)?;
        let (mut tape, bound) = self.scratch();
        let enc = self.encode_pool_graph(&mut tape, &bound, query, &[passage])?;
        let scores = self.pool_scores_graph(&mut tape, &bound, &enc, layer)?;
        Ok(tape.value(scores[0]).item())
    }

    /// The model's response score: similarity at the top layer.
    pub fn final_score(&self, query: &TokenSequence, passage: &TokenSequence) -> Result<f64> {
        self.layer_score(self.effective_layers(), query, passage)
    }

    fn final_repr(&self, which: StackChoice, seq: &TokenSequence) -> Result<Tensor> {
        let (mut tape, bound) = self.scratch();
        let enc = self.encode_stack_graph(&mut tape, &bound, which, seq)?;
        Ok(tape.value(enc.top()).clone())
    }

    fn require_de(&self, what: &str) -> Result<()> {
        if self.config.variant != Variant::De {
            return Err(Error::invalid_input(format!(
                "{what} requires a dual encoder, got {}",
                self.config.variant
            )));
        }
        Ok(())
    }

    /// Dense query embedding (dual encoder): final, possibly projected, CLS.
    pub fn embed_query(&self, seq: &TokenSequence) -> Result<Vec<f64>> {
        self.require_de("embed_query")?;
        Ok(self.final_repr(StackChoice::E1, seq)?.row(0).to_vec())
    }

    /// Dense passage embedding (dual encoder).
    pub fn embed_passage(&self, seq: &TokenSequence) -> Result<Vec<f64>> {
        self.require_de("embed_passage")?;
        Ok(self.final_repr(StackChoice::E2, seq)?.row(0).to_vec())
    }

    /// Final token matrix of a query (late interaction scoring at eval time).
    pub fn query_token_matrix(&self, seq: &TokenSequence) -> Result<Tensor> {
        self.final_repr(StackChoice::E1, seq)
    }

    /// Final token matrix of a passage (late interaction scoring at eval time).
    pub fn passage_token_matrix(&self, seq: &TokenSequence) -> Result<Tensor> {
        self.final_repr(StackChoice::E2, seq)
    }

    /// Shared projection vector of a cross encoder.
    pub fn ce_projection_values(&self) -> Result<&[f64]> {
        match self.ce_projection {
            Some(id) => Ok(&self.params.entry(id).values),
            None => Err(Error::invalid_input("model has no projection vector")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_check;
    use crate::model::scoring::{score_cb, score_de};

    fn tiny_config(variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            num_layers: 2,
            hidden_dim: 4,
            ff_dim: 8,
            vocab_size: 16,
            max_len: 12,
            seed: 9,
            appended_projection: false,
            cb_cls_features: false,
        }
    }

    fn seq(ids: &[u32]) -> TokenSequence {
        TokenSequence::new(ids.to_vec()).unwrap()
    }

    #[test]
    fn encode_shape_contract_and_determinism() {
        let model = RetrievalModel::new(tiny_config(Variant::De)).unwrap();
        let s = seq(&[0, 3, 5, 7]);
        let layers = model.encode_all_layers(StackChoice::E1, &s).unwrap();
        assert_eq!(layers.len(), 2);
        for l in &layers {
            assert_eq!(l.shape(), [4, 4]);
        }
        let again = model.encode_all_layers(StackChoice::E1, &s).unwrap();
        assert_eq!(layers, again);
    }

    #[test]
    fn prefix_property_layer1_ignores_layer2_params() {
        let mut model = RetrievalModel::new(tiny_config(Variant::De)).unwrap();
        let s = seq(&[0, 2, 4]);
        let before = model.encode_all_layers(StackChoice::E1, &s).unwrap();
        for entry in model.params_mut().entries_mut() {
            if entry.name.starts_with("e1.block1.") {
                for v in entry.values.iter_mut() {
                    *v += 0.37;
                }
            }
        }
        let after = model.encode_all_layers(StackChoice::E1, &s).unwrap();
        assert_eq!(before[0], after[0], "layer 1 must not see layer 2 params");
        assert_ne!(before[1], after[1]);
    }

    #[test]
    fn overlong_sequence_is_rejected() {
        let model = RetrievalModel::new(tiny_config(Variant::De)).unwrap();
        let s = seq(&[0; 13]);
        assert!(matches!(
            model.encode_all_layers(StackChoice::E1, &s),
            Err(crate::Error::InvalidInput(_))
        ));
    }

    #[test]
    fn out_of_range_layer_is_rejected() {
        let model = RetrievalModel::new(tiny_config(Variant::De)).unwrap();
        let (q, p) = (seq(&[0, 1, 2]), seq(&[0, 3, 4]));
        assert!(model.layer_score(0, &q, &p).is_err());
        assert!(model.layer_score(3, &q, &p).is_err());
        assert!(model.layer_score(2, &q, &p).is_ok());
    }

    #[test]
    fn top_layer_score_matches_value_path_bit_exactly() {
        for variant in [Variant::De, Variant::Cb, Variant::Ce] {
            let model = RetrievalModel::new(tiny_config(variant)).unwrap();
            let (q, p) = (seq(&[0, 2, 5]), seq(&[0, 7, 9, 11]));
            let top = model.layer_score(2, &q, &p).unwrap();
            let response = model.final_score(&q, &p).unwrap();
            assert_eq!(top.to_bits(), response.to_bits());

            let direct = match variant {
                Variant::De => {
                    let qm = model.query_token_matrix(&q).unwrap();
                    let pm = model.passage_token_matrix(&p).unwrap();
                    score_de(qm.row(0), pm.row(0)).unwrap()
                }
                Variant::Cb => {
                    let qm = model.query_token_matrix(&q).unwrap();
                    let pm = model.passage_token_matrix(&p).unwrap();
                    score_cb(&qm, &pm).unwrap()
                }
                Variant::Ce => {
                    let joint = RetrievalModel::joint_sequence(&q, &p).unwrap();
                    let layers = model.encode_all_layers(StackChoice::E1, &joint).unwrap();
                    let cls = layers.last().unwrap().row(0);
                    crate::model::scoring::score_ce(cls, model.ce_projection_values().unwrap())
                        .unwrap()
                }
            };
            assert_eq!(response.to_bits(), direct.to_bits(), "variant {variant}");
        }
    }

    #[test]
    fn appended_projection_adds_a_selectable_layer() {
        let mut cfg = tiny_config(Variant::De);
        cfg.appended_projection = true;
        let model = RetrievalModel::new(cfg).unwrap();
        assert_eq!(model.effective_layers(), 3);
        let (q, p) = (seq(&[0, 2]), seq(&[0, 3]));
        // Identity-initialized projection: layer 3 equals layer 2 at start.
        let s2 = model.layer_score(2, &q, &p).unwrap();
        let s3 = model.layer_score(3, &q, &p).unwrap();
        assert!((s2 - s3).abs() < 1e-12);
        assert_eq!(model.final_score(&q, &p).unwrap().to_bits(), s3.to_bits());
    }

    #[test]
    fn de_layer_scores_differ_across_layers() {
        let model = RetrievalModel::new(tiny_config(Variant::De)).unwrap();
        let (q, p) = (seq(&[0, 2, 5]), seq(&[0, 7, 9]));
        let s1 = model.layer_score(1, &q, &p).unwrap();
        let s2 = model.layer_score(2, &q, &p).unwrap();
        assert!((s1 - s2).abs() > 1e-9);
    }

    #[test]
    fn ce_score_depends_on_segment_order() {
        let model = RetrievalModel::new(tiny_config(Variant::Ce)).unwrap();
        let (q, p) = (seq(&[0, 2, 5]), seq(&[0, 7, 9]));
        let qp = model.final_score(&q, &p).unwrap();
        let pq = model.final_score(&p, &q).unwrap();
        assert!((qp - pq).abs() > 1e-9);
    }

    #[test]
    fn ce_yields_distinct_layer_scores_from_one_forward() {
        let model = RetrievalModel::new(tiny_config(Variant::Ce)).unwrap();
        let (q, p) = (seq(&[0, 2, 5]), seq(&[0, 7, 9]));
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let enc = model.encode_pool_graph(&mut tape, &bound, &q, &[&p]).unwrap();
        let s1 = model.pool_scores_graph(&mut tape, &bound, &enc, 1).unwrap()[0];
        let s2 = model.pool_scores_graph(&mut tape, &bound, &enc, 2).unwrap()[0];
        assert!((tape.value(s1).item() - tape.value(s2).item()).abs() > 1e-9);
    }

    #[test]
    fn de_score_symmetric_when_stacks_share_parameters() {
        let mut model = RetrievalModel::new(tiny_config(Variant::De)).unwrap();
        let copies: Vec<(usize, Vec<f64>)> = model
            .params()
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.name.starts_with("e1."))
            .map(|(i, e)| (i, e.values.clone()))
            .collect();
        for (i, values) in copies {
            let name = model.params().entries()[i].name.replace("e1.", "e2.");
            for entry in model.params_mut().entries_mut() {
                if entry.name == name {
                    entry.values = values.clone();
                }
            }
        }
        let (a, b) = (seq(&[0, 2, 5]), seq(&[0, 7, 9, 3]));
        let ab = model.final_score(&a, &b).unwrap();
        let ba = model.final_score(&b, &a).unwrap();
        assert_eq!(ab.to_bits(), ba.to_bits());
    }

    #[test]
    fn cb_score_is_asymmetric_in_general() {
        let model = RetrievalModel::new(tiny_config(Variant::Cb)).unwrap();
        let (q, p) = (seq(&[0, 2, 5]), seq(&[0, 7, 9, 3]));
        let qp = model.final_score(&q, &p).unwrap();
        let pq = model.final_score(&p, &q).unwrap();
        assert!((qp - pq).abs() > 1e-9);
    }

    #[test]
    fn all_variant_scores_pass_gradient_check() {
        for variant in [Variant::De, Variant::Cb, Variant::Ce] {
            let mut model = RetrievalModel::new(tiny_config(variant)).unwrap();
            let (q, p) = (seq(&[0, 2, 5]), seq(&[0, 7, 9, 11]));
            let point = model.params().to_flat();
            let err = finite_difference_check(
                |x| {
                    model.params_mut().load_flat(x).unwrap();
                    let mut tape = Tape::new();
                    let bound = model.bind(&mut tape);
                    let enc = model.encode_pool_graph(&mut tape, &bound, &q, &[&p]).unwrap();
                    let score =
                        model.pool_scores_graph(&mut tape, &bound, &enc, 2).unwrap()[0];
                    let grads = tape.backward(score).unwrap();
                    let mut flat_grad = Vec::new();
                    for (i, entry) in model.params().entries().iter().enumerate() {
                        flat_grad.extend(
                            grads.wrt_or_zeros(bound.ids()[i], entry.values.len()),
                        );
                    }
                    (tape.value(score).item(), flat_grad)
                },
                &point,
                1e-4,
            );
            assert!(err < 1e-4, "variant {variant}: err {err}");
        }
    }
}
