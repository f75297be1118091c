//! Model configuration and token sequences.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Reserved vocabulary id for the CLS token at position 0 of every sequence.
pub const CLS_ID: u32 = 0;
/// Reserved vocabulary id separating segments in a joint query-passage input.
pub const SEP_ID: u32 = 1;

/// Retrieval architecture variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Dual encoder: separate query/passage stacks, inner product of CLS.
    De,
    /// Late interaction: separate stacks, sum of per-query-token max similarity.
    Cb,
    /// Cross encoder: one stack over the joint pair, shared projection vector.
    Ce,
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let s = match self {
            Variant::De => "DE",
            Variant::Cb => "CB",
            Variant::Ce => "CE",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub ff_dim: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Append a trained linear map after the stack; it becomes one more
    /// selectable layer.
    pub appended_projection: bool,
    /// Score intermediate CB layers by CLS inner product instead of full
    /// max-similarity (ablation switch; the top layer always stays faithful).
    pub cb_cls_features: bool,
}

impl ModelConfig {
    pub fn new(variant: Variant, num_layers: usize) -> Self {
        ModelConfig {
            variant,
            num_layers,
            hidden_dim: 32,
            ff_dim: 64,
            vocab_size: 512,
            max_len: 64,
            seed: 0,
            appended_projection: false,
            cb_cls_features: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::invalid_parameter("num_layers must be positive"));
        }
        if self.hidden_dim == 0 || self.ff_dim == 0 {
            return Err(Error::invalid_parameter("hidden/ff dims must be positive"));
        }
        if self.vocab_size <= SEP_ID as usize {
            return Err(Error::invalid_parameter(
                "vocab_size must exceed the reserved ids",
            ));
        }
        if self.max_len == 0 {
            return Err(Error::invalid_parameter("max_len must be positive"));
        }
        Ok(())
    }
}

/// A tokenized sequence with the CLS convention: position 0 is reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<u32>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid_input("empty token sequence"));
        }
        Ok(TokenSequence { ids })
    }

    /// Build `[CLS, tokens...]` from content tokens.
    pub fn with_cls(content: &[u32]) -> Result<Self> {
        let mut ids = Vec::with_capacity(content.len() + 1);
        ids.push(CLS_ID);
        ids.extend_from_slice(content);
        TokenSequence::new(ids)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Content tokens, i.e. everything after a leading CLS if present.
    pub fn content(&self) -> &[u32] {
        match self.ids.first() {
            Some(&CLS_ID) => &self.ids[1..],
            _ => &self.ids,
        }
    }

    pub(crate) fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        if self.ids.len() > cfg.max_len {
            return Err(Error::invalid_input(format!(
                "sequence length {} exceeds maximum {}",
                self.ids.len(),
                cfg.max_len
            )));
        }
        if let Some(&bad) = self.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(Error::invalid_input(format!(
                "token id {bad} outside vocabulary of {}",
                cfg.vocab_size
            )));
        }
        Ok(())
    }
}
