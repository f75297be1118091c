//! Minimal reverse-mode automatic differentiation over `f64` tensors.
//!
//! Operations are recorded onto a [`Tape`] during the forward pass and
//! replayed in reverse for gradients. One tape is confined to a single
//! thread; distinct tapes may run concurrently. [`Tensor`] values detached
//! from any tape are plain immutable data.

mod check;
mod func;
mod tape;
mod tensor;

pub use check::{finite_difference_check, finite_difference_check_sampled};
pub use func::{kl_divergence, log_softmax, softmax_with_temperature};
pub use tape::{Gradients, Tape, TensorId};
pub use tensor::Tensor;
