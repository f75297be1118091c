//! Distillation losses, in two routes.
//!
//! Value-level functions operate on plain distributions and scores; they
//! define each loss term exactly and serve as the independent oracle for the
//! recorded graph. [`total_loss_graph`] builds the same composition on a tape
//! for training.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{kl_divergence, log_softmax, softmax_with_temperature, Tape, TensorId};
use crate::distill::example::TrainExample;
use crate::distill::features::LayerFeature;
use crate::distill::selection::LayerSelection;
use crate::distill::trainer::DistillConfig;
use crate::error::{Error, Result};
use crate::model::{BoundParams, RetrievalModel, TokenSequence};

/// The four loss terms of one example or batch, plus the per-layer weights
/// in effect.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub l_lyr: f64,
    pub l_rep: f64,
    pub l_tch: f64,
    pub l_stu: f64,
    pub total: f64,
    pub weights: Vec<f64>,
}

fn one_hot_index(y: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (i, &v) in y.iter().enumerate() {
        if (v - 1.0).abs() <= 1e-9 {
            if hot.is_some() {
                return Err(Error::invalid_input("label has multiple hot entries"));
            }
            hot = Some(i);
        } else if v.abs() > 1e-9 {
            return Err(Error::invalid_input("label is not one-hot"));
        }
    }
    hot.ok_or_else(|| Error::invalid_input("label has no hot entry"))
}

/// Informativeness weights for the selected teacher layers:
/// `w_i = softmax_i(-KL(y, t_i) / tau)`.
///
/// The weights gate the per-layer losses but are excluded from
/// differentiation.
pub fn layer_weights(teacher_features: &[LayerFeature], y: &[f64], tau: f64) -> Result<Vec<f64>> {
    if teacher_features.is_empty() {
        return Err(Error::invalid_input("no teacher features"));
    }
    let gold = one_hot_index(y)?;
    let mut neg_kls = Vec::with_capacity(teacher_features.len());
    for feature in teacher_features {
        if feature.dist.len() != y.len() {
            return Err(Error::invalid_input(format!(
                "feature over {} candidates, label over {}",
                feature.dist.len(),
                y.len()
            )));
        }
        let mass = feature.dist[gold];
        if mass <= 0.0 {
            return Err(Error::domain(
                "teacher feature assigns zero mass to the gold passage",
            ));
        }
        // KL(one-hot y, t) reduces to -ln t[gold].
        neg_kls.push(crate::fmath::ln(mass));
    }
    softmax_with_temperature(&neg_kls, tau)
}

/// Weighted sum of per-layer divergences: `Σ w_i · KL(t_{a_i} ‖ s_{b_i})`.
pub fn layer_loss(
    selection: &LayerSelection,
    teacher_features: &[LayerFeature],
    student_features: &[LayerFeature],
    weights: &[f64],
) -> Result<f64> {
    let k = selection.k();
    if teacher_features.len() != k || student_features.len() != k || weights.len() != k {
        return Err(Error::invalid_input(format!(
            "expected {k} aligned features and weights, got {}/{}/{}",
            teacher_features.len(),
            student_features.len(),
            weights.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..k {
        if teacher_features[i].layer_index != selection.teacher[i]
            || student_features[i].layer_index != selection.student[i]
        {
            return Err(Error::invalid_input("features misaligned with selection"));
        }
        total += weights[i] * kl_divergence(&teacher_features[i].dist, &student_features[i].dist)?;
    }
    Ok(total)
}

/// Response loss over the top-layer features: `KL(t ‖ s)` plus the reverse
/// direction when joint training is on.
pub fn response_loss(
    teacher_top: &LayerFeature,
    student_top: &LayerFeature,
    joint_training: bool,
) -> Result<f64> {
    if teacher_top.dist.len() != student_top.dist.len() {
        return Err(Error::invalid_input("response features over different pools"));
    }
    let forward = kl_divergence(&teacher_top.dist, &student_top.dist)?;
    if joint_training {
        Ok(forward + kl_divergence(&student_top.dist, &teacher_top.dist)?)
    } else {
        Ok(forward)
    }
}

/// Hard contrastive loss: `-Σ_{p+} log softmax(scores)[p+]` (untempered).
pub fn hard_loss(scores: &[f64], positives: &[usize]) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::invalid_input("no positive passages"));
    }
    if let Some(&bad) = positives.iter().find(|&&i| i >= scores.len()) {
        return Err(Error::invalid_input(format!(
            "positive index {bad} outside pool of {}",
            scores.len()
        )));
    }
    let log_probs = log_softmax(scores)?;
    Ok(-positives.iter().map(|&i| log_probs[i]).sum::<f64>())
}

/// Handles to the loss terms recorded on a tape for one example.
#[derive(Debug, Clone)]
pub struct LossNodes {
    pub l_lyr: TensorId,
    pub l_rep: TensorId,
    pub l_tch: TensorId,
    pub l_stu: TensorId,
    pub total: TensorId,
    pub weights: Vec<f64>,
}

impl LossNodes {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            l_lyr: tape.value(self.l_lyr).item(),
            l_rep: tape.value(self.l_rep).item(),
            l_tch: tape.value(self.l_tch).item(),
            l_stu: tape.value(self.l_stu).item(),
            total: tape.value(self.total).item(),
            weights: self.weights.clone(),
        }
    }
}

struct FeatureNodes {
    log_prob: TensorId,
    prob: TensorId,
}

fn feature_nodes(tape: &mut Tape, scores: TensorId, cfg: &DistillConfig) -> FeatureNodes {
    // Default reading: temperature divides the logits before the softmax.
    // The literal reading keeps raw softmax distributions and instead scales
    // each divergence by 1/tau (dividing a distribution by tau rescales its
    // generalized KL by exactly that factor).
    let scaled = if cfg.literal_tau_scaling {
        scores
    } else {
        tape.scale(scores, 1.0 / cfg.tau)
    };
    let log_prob = tape.log_softmax(scaled);
    let prob = tape.exp(log_prob);
    FeatureNodes { log_prob, prob }
}

fn kl_node(tape: &mut Tape, target: &FeatureNodes, other_log_prob: TensorId, cfg: &DistillConfig) -> TensorId {
    let diff = tape.sub(target.log_prob, other_log_prob);
    let kl = tape.dot(target.prob, diff);
    if cfg.literal_tau_scaling {
        tape.scale(kl, 1.0 / cfg.tau)
    } else {
        kl
    }
}

fn hard_loss_node(tape: &mut Tape, scores: TensorId, positives: &[usize]) -> TensorId {
    let log_probs = tape.log_softmax(scores);
    let picks: Vec<TensorId> = positives.iter().map(|&i| tape.pick(log_probs, i)).collect();
    let stacked = tape.stack_scalars(&picks);
    let summed = tape.sum_all(stacked);
    tape.scale(summed, -1.0)
}

/// Everything the loss graph needs to see of the two models and the example.
pub struct LossInputs<'a> {
    pub teacher: &'a RetrievalModel,
    pub teacher_bound: &'a BoundParams,
    pub student: &'a RetrievalModel,
    pub student_bound: &'a BoundParams,
    pub example: &'a TrainExample,
    /// Other examples' passages appended to the pool (in-batch negatives).
    pub extra_negatives: &'a [&'a TokenSequence],
}

/// Record the combined distillation objective for one example:
/// `L_total = L_lyr + L_rep + L_tch + L_stu`.
///
/// With joint training off, the teacher is detached (its parameters receive
/// no gradient), the teacher hard loss is dropped, and the response loss
/// keeps only the forward direction. With layer re-weighting off the weights
/// are the constant `1/K`. `weight_override` pins the weights externally
/// (gradient checking needs them held constant across perturbations).
pub fn total_loss_graph(
    tape: &mut Tape,
    inputs: &LossInputs<'_>,
    cfg: &DistillConfig,
    selection: &LayerSelection,
    weight_override: Option<&[f64]>,
) -> Result<LossNodes> {
    cfg.validate()?;
    let k = selection.k();
    let n_eff = inputs.teacher.effective_layers();
    let m_eff = inputs.student.effective_layers();
    if !(n_eff >= m_eff && m_eff >= k) {
        return Err(Error::invalid_parameter(format!(
            "models must satisfy N >= M >= K, got N={n_eff}, M={m_eff}, K={k}"
        )));
    }
    if selection.teacher.iter().any(|&a| a == 0 || a > n_eff)
        || selection.student.iter().any(|&b| b == 0 || b > m_eff)
    {
        return Err(Error::invalid_input("selection outside model depth"));
    }
    if let Some(w) = weight_override {
        if w.len() != k {
            return Err(Error::invalid_input("weight override length mismatch"));
        }
    }

    let pool: Vec<&TokenSequence> = inputs
        .example
        .pool()
        .chain(inputs.extra_negatives.iter().copied())
        .collect();
    let positives = inputs.example.positive_indices();

    let t_enc = inputs.teacher.encode_pool_graph(
        tape,
        inputs.teacher_bound,
        &inputs.example.query,
        &pool,
    )?;
    let s_enc = inputs.student.encode_pool_graph(
        tape,
        inputs.student_bound,
        &inputs.example.query,
        &pool,
    )?;

    let mut teacher_scores_at = |tape: &mut Tape, layer: usize| -> Result<TensorId> {
        let scalars =
            inputs
                .teacher
                .pool_scores_graph(tape, inputs.teacher_bound, &t_enc, layer)?;
        let stacked = tape.stack_scalars(&scalars);
        // Frozen teacher: cut the gradient path right at the scores.
        Ok(if cfg.joint_training {
            stacked
        } else {
            tape.detach(stacked)
        })
    };

    // Selected-layer and top-layer score vectors.
    let mut t_layer_scores = Vec::with_capacity(k);
    for &a in &selection.teacher {
        t_layer_scores.push(teacher_scores_at(tape, a)?);
    }
    let t_top_scores = teacher_scores_at(tape, n_eff)?;

    let mut s_layer_scores = Vec::with_capacity(k);
    for &b in &selection.student {
        let scalars =
            inputs
                .student
                .pool_scores_graph(tape, inputs.student_bound, &s_enc, b)?;
        s_layer_scores.push(tape.stack_scalars(&scalars));
    }
    let s_top_scalars =
        inputs
            .student
            .pool_scores_graph(tape, inputs.student_bound, &s_enc, m_eff)?;
    let s_top_scores = tape.stack_scalars(&s_top_scalars);

    let t_features: Vec<FeatureNodes> = t_layer_scores
        .iter()
        .map(|&s| feature_nodes(tape, s, cfg))
        .collect();
    let s_features: Vec<FeatureNodes> = s_layer_scores
        .iter()
        .map(|&s| feature_nodes(tape, s, cfg))
        .collect();
    let t_top = feature_nodes(tape, t_top_scores, cfg);
    let s_top = feature_nodes(tape, s_top_scores, cfg);

    // Per-layer weights act as constants: computed from feature values, not
    // differentiated through.
    let weights: Vec<f64> = match weight_override {
        Some(w) => w.to_vec(),
        None if cfg.layer_reweighting => {
            let y = inputs.example.label_one_hot(pool.len());
            let features: Vec<LayerFeature> = t_features
                .iter()
                .zip(&selection.teacher)
                .map(|(f, &a)| LayerFeature {
                    layer_index: a,
                    dist: tape.value(f.prob).data().to_vec(),
                })
                .collect();
            layer_weights(&features, &y, cfg.tau)?
        }
        None => vec![1.0 / k as f64; k],
    };

    let mut weighted_terms = Vec::with_capacity(k);
    for i in 0..k {
        let kl = kl_node(tape, &t_features[i], s_features[i].log_prob, cfg);
        weighted_terms.push(tape.scale(kl, weights[i]));
    }
    let stacked = tape.stack_scalars(&weighted_terms);
    let l_lyr = tape.sum_all(stacked);

    let forward = kl_node(tape, &t_top, s_top.log_prob, cfg);
    let l_rep = if cfg.joint_training {
        let reverse = kl_node(tape, &s_top, t_top.log_prob, cfg);
        tape.add(forward, reverse)
    } else {
        forward
    };

    let l_tch = if cfg.joint_training {
        hard_loss_node(tape, t_top_scores, &positives)
    } else {
        tape.scalar(0.0)
    };
    let l_stu = hard_loss_node(tape, s_top_scores, &positives);

    let partial = tape.add(l_lyr, l_rep);
    let partial = tape.add(partial, l_tch);
    let total = tape.add(partial, l_stu);

    Ok(LossNodes {
        l_lyr,
        l_rep,
        l_tch,
        l_stu,
        total,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_check;
    use crate::distill::features::{feature_from_scores, layer_feature};
    use crate::distill::selection::{select_layers, SelectionStrategy};
    use crate::model::{ModelConfig, Variant};
    use crate::rng::Rng;

    const LN_2: f64 = 0.693_147_180_559_945_3;

    fn feat(layer: usize, dist: &[f64]) -> LayerFeature {
        LayerFeature {
            layer_index: layer,
            dist: dist.to_vec(),
        }
    }

    #[test]
    fn identical_features_get_uniform_weights() {
        let features = vec![feat(1, &[0.7, 0.3]), feat(2, &[0.7, 0.3]), feat(3, &[0.7, 0.3])];
        let w = layer_weights(&features, &[1.0, 0.0], 1.0).unwrap();
        for v in &w {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_follow_gold_mass_ratio() {
        // t1[gold] = e^{-1} * t2[gold] at tau = 1 gives softmax([-1, 0]).
        let g2 = 0.5;
        let g1 = g2 * (-1.0f64).exp();
        let features = vec![feat(1, &[g1, 1.0 - g1]), feat(2, &[g2, 1.0 - g2])];
        let w = layer_weights(&features, &[1.0, 0.0], 1.0).unwrap();
        assert!((w[0] - 0.268_941_421_369_995_1).abs() < 1e-6);
        assert!((w[1] - 0.731_058_578_630_004_9).abs() < 1e-6);
    }

    #[test]
    fn singleton_weight_is_one() {
        let w = layer_weights(&[feat(1, &[0.9, 0.1])], &[1.0, 0.0], 1.0).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn weights_are_permutation_equivariant_and_normalized() {
        let features = vec![feat(1, &[0.6, 0.4]), feat(2, &[0.2, 0.8]), feat(3, &[0.45, 0.55])];
        let y = [1.0, 0.0];
        let w = layer_weights(&features, &y, 0.7).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let permuted = vec![features[2].clone(), features[0].clone(), features[1].clone()];
        let wp = layer_weights(&permuted, &y, 0.7).unwrap();
        assert!((wp[0] - w[2]).abs() < 1e-12);
        assert!((wp[1] - w[0]).abs() < 1e-12);
        assert!((wp[2] - w[1]).abs() < 1e-12);
    }

    #[test]
    fn zero_gold_mass_is_a_domain_error() {
        let err = layer_weights(&[feat(1, &[0.0, 1.0])], &[1.0, 0.0], 1.0).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    fn fixed_selection(k: usize) -> LayerSelection {
        LayerSelection {
            teacher: (1..=k).collect(),
            student: (1..=k).collect(),
        }
    }

    #[test]
    fn equal_features_give_zero_layer_loss() {
        let sel = fixed_selection(2);
        let t = vec![feat(1, &[0.5, 0.5]), feat(2, &[0.9, 0.1])];
        let loss = layer_loss(&sel, &t, &t, &[0.5, 0.5]).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn point_mass_layer_loss_is_ln2() {
        let sel = fixed_selection(1);
        let t = vec![feat(1, &[1.0, 0.0])];
        let s = vec![feat(1, &[0.5, 0.5])];
        let loss = layer_loss(&sel, &t, &s, &[1.0]).unwrap();
        assert!((loss - LN_2).abs() < 1e-12);
    }

    #[test]
    fn normalized_weights_make_scaling_a_noop() {
        let sel = fixed_selection(2);
        let t = vec![feat(1, &[0.8, 0.2]), feat(2, &[0.3, 0.7])];
        let s = vec![feat(1, &[0.6, 0.4]), feat(2, &[0.5, 0.5])];
        let w = [0.25, 0.75];
        let doubled_renormalized = [0.5 / 2.0, 1.5 / 2.0];
        let a = layer_loss(&sel, &t, &s, &w).unwrap();
        let b = layer_loss(&sel, &t, &s, &doubled_renormalized).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn response_loss_modes() {
        let t = feat(4, &[0.75, 0.25]);
        let s = feat(2, &[0.25, 0.75]);
        assert_eq!(response_loss(&t, &t, true).unwrap(), 0.0);
        assert_eq!(response_loss(&t, &t, false).unwrap(), 0.0);
        let joint = response_loss(&t, &s, true).unwrap();
        let swapped = response_loss(&s, &t, true).unwrap();
        assert!((joint - swapped).abs() < 1e-12);
        // Both directions equal 0.5 ln 3, so the sum is 2 * 0.549306...
        assert!((joint - 1.098_612_288_668_109_8).abs() < 1e-9);
    }

    #[test]
    fn hard_loss_hand_values() {
        let ln2 = hard_loss(&[0.0, 0.0], &[0]).unwrap();
        assert!((ln2 - LN_2).abs() < 1e-12);
        let saturated = hard_loss(&[60.0, 0.0], &[0]).unwrap();
        assert!(saturated < 1e-12);
        let two_pos = hard_loss(&[0.3, 0.3], &[0, 1]).unwrap();
        assert!((two_pos - 2.0 * LN_2).abs() < 1e-12);
        assert!(hard_loss(&[0.1, 0.2], &[]).is_err());
        assert!(hard_loss(&[0.1, 0.2], &[5]).is_err());
    }

    fn tiny_model(variant: Variant, layers: usize, seed: u64) -> RetrievalModel {
        let mut cfg = ModelConfig::new(variant, layers);
        cfg.hidden_dim = 4;
        cfg.ff_dim = 8;
        cfg.vocab_size = 16;
        cfg.max_len = 16;
        cfg.seed = seed;
        RetrievalModel::new(cfg).unwrap()
    }

    fn seq(ids: &[u32]) -> TokenSequence {
        TokenSequence::new(ids.to_vec()).unwrap()
    }

    fn example() -> TrainExample {
        TrainExample::new(
            seq(&[0, 2, 3]),
            vec![seq(&[0, 4, 5])],
            vec![seq(&[0, 6, 7]), seq(&[0, 8, 9])],
        )
        .unwrap()
    }

    fn graph_breakdown(
        teacher: &RetrievalModel,
        student: &RetrievalModel,
        cfg: &DistillConfig,
        selection: &LayerSelection,
    ) -> LossBreakdown {
        let mut tape = Tape::new();
        let tb = teacher.bind(&mut tape);
        let sb = student.bind(&mut tape);
        let ex = example();
        let inputs = LossInputs {
            teacher,
            teacher_bound: &tb,
            student,
            student_bound: &sb,
            example: &ex,
            extra_negatives: &[],
        };
        let nodes = total_loss_graph(&mut tape, &inputs, cfg, selection, None).unwrap();
        nodes.breakdown(&tape)
    }

    #[test]
    fn identical_models_have_zero_distillation_terms() {
        let teacher = tiny_model(Variant::De, 2, 7);
        let student = teacher.clone();
        let cfg = DistillConfig::new(2);
        let selection = fixed_selection(2);
        let b = graph_breakdown(&teacher, &student, &cfg, &selection);
        assert!(b.l_lyr.abs() < 1e-12, "l_lyr {}", b.l_lyr);
        assert!(b.l_rep.abs() < 1e-12, "l_rep {}", b.l_rep);
        assert!((b.total - (b.l_tch + b.l_stu)).abs() < 1e-12);
    }

    #[test]
    fn breakdown_total_is_the_sum_of_parts() {
        let teacher = tiny_model(Variant::Cb, 2, 3);
        let student = tiny_model(Variant::De, 2, 4);
        for (joint, reweight) in [(true, true), (true, false), (false, true), (false, false)] {
            let mut cfg = DistillConfig::new(2);
            cfg.joint_training = joint;
            cfg.layer_reweighting = reweight;
            let b = graph_breakdown(&teacher, &student, &cfg, &fixed_selection(2));
            assert!((b.total - (b.l_lyr + b.l_rep + b.l_tch + b.l_stu)).abs() < 1e-9);
            assert!((b.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(b.l_lyr >= 0.0 && b.l_rep >= 0.0);
            if !joint {
                assert_eq!(b.l_tch, 0.0);
            }
            if !reweight {
                assert!(b.weights.iter().all(|&w| (w - 0.5).abs() < 1e-12));
            }
        }
    }

    // Reduced objectives recomputed through the value-level route, which
    // shares no code with the tape composition above feature extraction.
    #[test]
    fn graph_matches_value_route_oracle() {
        let teacher = tiny_model(Variant::Cb, 2, 3);
        let student = tiny_model(Variant::De, 2, 4);
        let ex = example();
        let tau = 0.8;
        let selection = fixed_selection(2);

        for (joint, reweight) in [(false, false), (true, true)] {
            let mut cfg = DistillConfig::new(2);
            cfg.tau = tau;
            cfg.joint_training = joint;
            cfg.layer_reweighting = reweight;
            let got = graph_breakdown(&teacher, &student, &cfg, &selection);

            let t_feats: Vec<LayerFeature> = selection
                .teacher
                .iter()
                .map(|&a| layer_feature(&teacher, a, &ex, tau).unwrap())
                .collect();
            let s_feats: Vec<LayerFeature> = selection
                .student
                .iter()
                .map(|&b| layer_feature(&student, b, &ex, tau).unwrap())
                .collect();
            let y = ex.label_one_hot(ex.pool_len());
            let weights = if reweight {
                layer_weights(&t_feats, &y, tau).unwrap()
            } else {
                vec![0.5, 0.5]
            };
            let want_lyr = layer_loss(&selection, &t_feats, &s_feats, &weights).unwrap();
            let t_top = layer_feature(&teacher, 2, &ex, tau).unwrap();
            let s_top = layer_feature(&student, 2, &ex, tau).unwrap();
            let want_rep = response_loss(&t_top, &s_top, joint).unwrap();
            let t_scores: Vec<f64> = ex
                .pool()
                .map(|p| teacher.final_score(&ex.query, p).unwrap())
                .collect();
            let s_scores: Vec<f64> = ex
                .pool()
                .map(|p| student.final_score(&ex.query, p).unwrap())
                .collect();
            let want_tch = if joint {
                hard_loss(&t_scores, &[0]).unwrap()
            } else {
                0.0
            };
            let want_stu = hard_loss(&s_scores, &[0]).unwrap();

            assert!((got.l_lyr - want_lyr).abs() < 1e-9, "lyr {} vs {}", got.l_lyr, want_lyr);
            assert!((got.l_rep - want_rep).abs() < 1e-9);
            assert!((got.l_tch - want_tch).abs() < 1e-9);
            assert!((got.l_stu - want_stu).abs() < 1e-9);
        }
    }

    #[test]
    fn total_loss_gradient_passes_finite_difference() {
        let mut teacher = tiny_model(Variant::Cb, 2, 3);
        let mut student = tiny_model(Variant::De, 2, 4);
        let ex = example();
        let mut cfg = DistillConfig::new(2);
        cfg.joint_training = true;
        let selection = fixed_selection(2);

        // Weights pinned at the base point so perturbations cannot move them.
        let base = graph_breakdown(&teacher, &student, &cfg, &selection);
        let pinned = base.weights.clone();

        let t_len = teacher.params().total_values();
        let mut point = teacher.params().to_flat();
        point.extend(student.params().to_flat());

        let err = finite_difference_check(
            |x| {
                teacher.params_mut().load_flat(&x[..t_len]).unwrap();
                student.params_mut().load_flat(&x[t_len..]).unwrap();
                let mut tape = Tape::new();
                let tb = teacher.bind(&mut tape);
                let sb = student.bind(&mut tape);
                let inputs = LossInputs {
                    teacher: &teacher,
                    teacher_bound: &tb,
                    student: &student,
                    student_bound: &sb,
                    example: &ex,
                    extra_negatives: &[],
                };
                let nodes =
                    total_loss_graph(&mut tape, &inputs, &cfg, &selection, Some(&pinned)).unwrap();
                let grads = tape.backward(nodes.total).unwrap();
                let mut flat = Vec::new();
                for (i, e) in teacher.params().entries().iter().enumerate() {
                    flat.extend(grads.wrt_or_zeros(tb.ids()[i], e.values.len()));
                }
                for (i, e) in student.params().entries().iter().enumerate() {
                    flat.extend(grads.wrt_or_zeros(sb.ids()[i], e.values.len()));
                }
                (tape.value(nodes.total).item(), flat)
            },
            &point,
            1e-4,
        );
        assert!(err < 1e-4, "err {err}");
    }

    #[test]
    fn in_batch_negatives_extend_the_pool() {
        let teacher = tiny_model(Variant::Cb, 2, 3);
        let student = tiny_model(Variant::De, 2, 4);
        let ex = example();
        let extra_seq = seq(&[0, 10, 11]);
        let extras = [&extra_seq];
        let cfg = DistillConfig::new(2);
        let mut tape = Tape::new();
        let tb = teacher.bind(&mut tape);
        let sb = student.bind(&mut tape);
        let inputs = LossInputs {
            teacher: &teacher,
            teacher_bound: &tb,
            student: &student,
            student_bound: &sb,
            example: &ex,
            extra_negatives: &extras,
        };
        let nodes = total_loss_graph(&mut tape, &inputs, &cfg, &fixed_selection(2), None).unwrap();
        // Weights were computed over a pool of 4 (3 own + 1 extra).
        assert_eq!(nodes.weights.len(), 2);
        let b = nodes.breakdown(&tape);
        assert!(b.total.is_finite());
    }

    #[test]
    fn features_invariant_under_joint_score_temperature_scaling() {
        let mut rng = Rng::seed_from(13);
        for _ in 0..200 {
            let n = 2 + rng.below(6);
            let scores: Vec<f64> = (0..n).map(|_| rng.normal_scaled(3.0)).collect();
            let tau = 0.25 + rng.uniform() * 4.0;
            let c = 0.1 + rng.uniform() * 10.0;
            let scaled: Vec<f64> = scores.iter().map(|&s| s * c).collect();
            let a = feature_from_scores(&scores, tau).unwrap();
            let b = feature_from_scores(&scaled, tau * c).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn literal_tau_reading_scales_divergences() {
        let teacher = tiny_model(Variant::Cb, 2, 3);
        let student = tiny_model(Variant::De, 2, 4);
        let selection = fixed_selection(2);
        let mut literal = DistillConfig::new(2);
        literal.tau = 2.0;
        literal.literal_tau_scaling = true;
        literal.layer_reweighting = false;
        let mut unit = literal.clone();
        unit.tau = 1.0;
        let with_tau = graph_breakdown(&teacher, &student, &literal, &selection);
        let at_unit = graph_breakdown(&teacher, &student, &unit, &selection);
        // Literal reading: same raw-softmax features, divergences divided by tau.
        assert!((with_tau.l_lyr - at_unit.l_lyr / 2.0).abs() < 1e-9);
        assert!((with_tau.l_rep - at_unit.l_rep / 2.0).abs() < 1e-9);
        assert!((with_tau.l_stu - at_unit.l_stu).abs() < 1e-12);
    }

    #[test]
    fn random_selection_respects_partial_order_in_loss() {
        let teacher = tiny_model(Variant::Cb, 4, 3);
        let student = tiny_model(Variant::De, 2, 4);
        let mut rng = Rng::seed_from(17);
        for _ in 0..20 {
            let sel = select_layers(SelectionStrategy::Random, 4, 2, 2, &mut rng).unwrap();
            let b = graph_breakdown(&teacher, &student, &DistillConfig::new(2), &sel);
            assert!(b.total.is_finite());
        }
    }
}
