//! Tokenizer-free layer-wise distillation for dense retrieval, desk scale.
//!
//! The crate is organized around five building blocks:
//!
//! - [`autodiff`]: a minimal reverse-mode tape over `f64` tensors, with a
//!   finite-difference gradient oracle.
//! - [`model`]: toy transformer-style encoder stacks and the unified
//!   retrieval-model view (dual encoder, late interaction, cross encoder),
//!   all exposing per-layer outputs.
//! - [`distill`]: per-layer batch similarity distributions as distillation
//!   features, order-preserving layer selection, informativeness-based layer
//!   re-weighting, and the joint teacher-student training step.
//! - [`retrieval`]: exact inner-product search, hard-negative mining,
//!   reranking, and ranked-retrieval metrics.
//! - [`synthdata`]: a deterministic synthetic corpus generator with known
//!   relevance structure, plus batching with negative sampling.
//!
//! The crate is `no_std`-compatible (requires `alloc`); disable the default
//! `std` feature and enable `libm` for float intrinsics. All file formats,
//! experiment orchestration, and the CLI live in the companion `lead-cli`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("lead-core requires either the `std` or the `libm` feature");

pub mod autodiff;
pub mod distill;
pub mod model;
pub mod retrieval;
pub mod error;
mod fmath;
pub mod rng;

pub use error::{Error, Result};
