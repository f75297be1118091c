//! Named parameter storage shared by encoders, optimizers and checkpoints.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Tensor, TensorId};
use crate::error::{Error, Result};

/// Index of one named array inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Flat, ordered collection of a model's trainable arrays.
///
/// Creation order is deterministic and doubles as the checkpoint layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> ParamId {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, values.len(), "parameter shape/value mismatch");
        self.entries.push(ParamEntry {
            name: name.into(),
            shape,
            values,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    /// Total scalar count across all entries.
    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    /// Concatenate all values in entry order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.total_values());
        for e in &self.entries {
            flat.extend_from_slice(&e.values);
        }
        flat
    }

    /// Overwrite all values from a flat vector laid out as [`Self::to_flat`].
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.total_values() {
            return Err(Error::invalid_input(alloc::format!(
                "flat parameter vector has {} values, expected {}",
                flat.len(),
                self.total_values()
            )));
        }
        let mut offset = 0;
        for e in &mut self.entries {
            let n = e.values.len();
            e.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Insert every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let ids = self
            .entries
            .iter()
            .map(|e| tape.leaf(Tensor::new(e.shape.clone(), e.values.clone())))
            .collect();
        BoundParams { ids }
    }
}

/// Tape handles for every entry of a bound [`ParamSet`], aligned by index.
#[derive(Debug, Clone)]
pub struct BoundParams {
    ids: Vec<TensorId>,
}

impl BoundParams {
    pub fn id(&self, param: ParamId) -> TensorId {
        self.ids[param.0]
    }

    pub fn ids(&self) -> &[TensorId] {
        &self.ids
    }
}
