//! Layer-feature distillation between a teacher and a student retrieval
//! model.
//!
//! A layer feature is the softmax distribution, at one layer, of a query's
//! similarity scores over its candidate pool. Distillation selects `K`
//! order-preserving layers from each model, pulls the student's layer
//! features toward the teacher's, re-weights the selected teacher layers by
//! how informative they are about the gold passage, and adds a bidirectional
//! response loss plus hard losses. The teacher trains alongside the student
//! when joint training is enabled.

mod example;
mod features;
mod losses;
mod optim;
mod selection;
mod trainer;

pub use example::TrainExample;
pub use features::{feature_from_scores, layer_feature, LayerFeature};
pub use losses::{
    hard_loss, layer_loss, layer_weights, response_loss, total_loss_graph, LossBreakdown, LossInputs,
    LossNodes,
};
pub use optim::Adam;
pub use selection::{select_layers, LayerSelection, SelectionStrategy};
pub use trainer::{train_step, DistillConfig, StepOutput};
