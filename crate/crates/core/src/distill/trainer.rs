//! One joint teacher-student training step.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Gradients, Tape};
use crate::distill::example::TrainExample;
use crate::distill::losses::{total_loss_graph, LossBreakdown, LossInputs, LossNodes};
use crate::distill::optim::Adam;
use crate::distill::selection::{select_layers, LayerSelection, SelectionStrategy};
use crate::error::{Error, Result};
use crate::model::{BoundParams, ParamSet, RetrievalModel, TokenSequence, Variant};
use crate::rng::Rng;

/// Distillation hyperparameters and ablation switches.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    /// Number of aligned layer pairs.
    pub k: usize,
    /// Temperature shared by layer features, response features and weights.
    pub tau: f64,
    pub strategy: SelectionStrategy,
    /// Train the teacher alongside the student (bidirectional response loss
    /// plus the teacher hard loss). Off freezes the teacher entirely.
    pub joint_training: bool,
    /// Informativeness weights per selected layer; off uses constant `1/K`.
    pub layer_reweighting: bool,
    /// Extend each example's pool with the other batch examples' passages
    /// (separate-encoding variants only).
    pub in_batch_negatives: bool,
    /// Literal reading of dividing distributions by the temperature: raw
    /// softmax features with divergences scaled by `1/tau`.
    pub literal_tau_scaling: bool,
    pub seed: u64,
}

impl DistillConfig {
    pub fn new(k: usize) -> Self {
        DistillConfig {
            k,
            tau: 1.0,
            strategy: SelectionStrategy::Random,
            joint_training: true,
            layer_reweighting: true,
            in_batch_negatives: false,
            literal_tau_scaling: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid_parameter("K must be positive"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid_parameter(format!(
                "temperature must be positive and finite, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Result of one training step: batch-mean losses and the selection used.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub breakdown: LossBreakdown,
    pub selection: LayerSelection,
}

fn collect_grads(grads: &Gradients, bound: &BoundParams, params: &ParamSet) -> Vec<Vec<f64>> {
    params
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| grads.wrt_or_zeros(bound.ids()[i], e.values.len()))
        .collect()
}

fn in_batch_allowed(teacher: &RetrievalModel, student: &RetrievalModel) -> bool {
    teacher.variant() != Variant::Ce && student.variant() != Variant::Ce
}

struct BatchGraph {
    tape: Tape,
    teacher_bound: BoundParams,
    student_bound: BoundParams,
    nodes: LossNodes,
}

fn build_batch_graph(
    teacher: &RetrievalModel,
    student: &RetrievalModel,
    batch: &[TrainExample],
    cfg: &DistillConfig,
    selection: &LayerSelection,
) -> Result<BatchGraph> {
    if batch.is_empty() {
        return Err(Error::invalid_input("empty training batch"));
    }
    let mut tape = Tape::new();
    let teacher_bound = teacher.bind(&mut tape);
    let student_bound = student.bind(&mut tape);

    let use_in_batch = cfg.in_batch_negatives && in_batch_allowed(teacher, student);
    let mut per_example = Vec::with_capacity(batch.len());
    for (i, example) in batch.iter().enumerate() {
        let extras: Vec<&TokenSequence> = if use_in_batch {
            batch
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, other)| other.pool())
                .collect()
        } else {
            Vec::new()
        };
        let inputs = LossInputs {
            teacher,
            teacher_bound: &teacher_bound,
            student,
            student_bound: &student_bound,
            example,
            extra_negatives: &extras,
        };
        per_example.push(total_loss_graph(&mut tape, &inputs, cfg, selection, None)?);
    }

    let l_lyr = mean_of(&mut tape, &per_example, |n| n.l_lyr);
    let l_rep = mean_of(&mut tape, &per_example, |n| n.l_rep);
    let l_tch = mean_of(&mut tape, &per_example, |n| n.l_tch);
    let l_stu = mean_of(&mut tape, &per_example, |n| n.l_stu);
    let partial = tape.add(l_lyr, l_rep);
    let partial = tape.add(partial, l_tch);
    let total = tape.add(partial, l_stu);

    let k = selection.k();
    let mut weights = alloc::vec![0.0; k];
    for nodes in &per_example {
        for (w, &nw) in weights.iter_mut().zip(&nodes.weights) {
            *w += nw;
        }
    }
    for w in weights.iter_mut() {
        *w /= batch.len() as f64;
    }

    Ok(BatchGraph {
        tape,
        teacher_bound,
        student_bound,
        nodes: LossNodes {
            l_lyr,
            l_rep,
            l_tch,
            l_stu,
            total,
            weights,
        },
    })
}

fn mean_of(
    tape: &mut Tape,
    nodes: &[LossNodes],
    pick: impl Fn(&LossNodes) -> crate::autodiff::TensorId,
) -> crate::autodiff::TensorId {
    let parts: Vec<_> = nodes.iter().map(pick).collect();
    tape.mean_scalars(&parts)
}

/// Batch-mean loss terms without touching any parameters.
pub fn batch_loss(
    teacher: &RetrievalModel,
    student: &RetrievalModel,
    batch: &[TrainExample],
    cfg: &DistillConfig,
    selection: &LayerSelection,
) -> Result<LossBreakdown> {
    let graph = build_batch_graph(teacher, student, batch, cfg, selection)?;
    Ok(graph.nodes.breakdown(&graph.tape))
}

/// One optimization step on the batch-mean total loss.
///
/// The student always updates; the teacher updates only under joint
/// training. Under the `Random` strategy a fresh selection is drawn from
/// `rng` for this step.
pub fn train_step(
    teacher: &mut RetrievalModel,
    student: &mut RetrievalModel,
    batch: &[TrainExample],
    cfg: &DistillConfig,
    teacher_opt: &mut Adam,
    student_opt: &mut Adam,
    rng: &mut Rng,
    step_index: u64,
) -> Result<StepOutput> {
    let selection = select_layers(
        cfg.strategy,
        teacher.effective_layers(),
        student.effective_layers(),
        cfg.k,
        rng,
    )?;
    let graph = build_batch_graph(teacher, student, batch, cfg, &selection)?;
    let breakdown = graph.nodes.breakdown(&graph.tape);
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite {
            step: step_index,
            detail: format!(
                "l_lyr={} l_rep={} l_tch={} l_stu={}",
                breakdown.l_lyr, breakdown.l_rep, breakdown.l_tch, breakdown.l_stu
            ),
        });
    }

    let grads = graph.tape.backward(graph.nodes.total)?;
    let student_grads = collect_grads(&grads, &graph.student_bound, student.params());
    student_opt.step(student.params_mut(), &student_grads);
    if cfg.joint_training {
        let teacher_grads = collect_grads(&grads, &graph.teacher_bound, teacher.params());
        teacher_opt.step(teacher.params_mut(), &teacher_grads);
    }

    Ok(StepOutput {
        breakdown,
        selection,
    })
}
