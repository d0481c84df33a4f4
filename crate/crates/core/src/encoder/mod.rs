//! Structural encoder: `cls` slot + learned position embeddings, a stack of
//! post-norm transformer layers with masked multi-head attention, and a
//! GELU MLP over the final `cls` state producing one logit.

mod backward;
mod forward;
mod ops;
mod params;

pub use backward::{accumulate_backward, backward};
pub use forward::{forward, forward_fixed_relations, forward_with, Cache, Forward, Mode, Relations};
pub use params::{init_params, LayerParams, ModelParams};

use alloc::format;

use crate::{Error, Result};

/// Scale for attention scores: `sqrt(d_head)` (standard) or `sqrt(dim)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttentionScale {
    #[default]
    Head,
    Model,
}

impl AttentionScale {
    pub fn name(self) -> &'static str {
        match self {
            AttentionScale::Head => "d_head",
            AttentionScale::Model => "d_model",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "d_head" => Some(AttentionScale::Head),
            "d_model" => Some(AttentionScale::Model),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub dim: usize,
    /// Sentence slots after the `cls` slot.
    pub max_sentences: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub mlp_hidden: usize,
    pub dropout_rate: f64,
    pub scale: AttentionScale,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self::with_dim(crate::data::DEFAULT_DIM)
    }
}

impl HyperParams {
    /// Defaults for a given embedding width: 32 sentences, 3 layers, 8 heads,
    /// `d_ff = 4 * dim`, 256 hidden units in the head, dropout 0.1.
    pub fn with_dim(dim: usize) -> Self {
        Self {
            dim,
            max_sentences: 32,
            n_layers: 3,
            n_heads: 8,
            d_ff: 4 * dim,
            mlp_hidden: 256,
            dropout_rate: 0.1,
            scale: AttentionScale::Head,
        }
    }

    pub fn seq_len(&self) -> usize {
        self.max_sentences + 1
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("dim", self.dim),
            ("max_sentences", self.max_sentences),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("mlp_hidden", self.mlp_hidden),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::BadConfig(format!("{name} must be >= 1")));
        }
        if self.dim % self.n_heads != 0 {
            return Err(Error::BadConfig(format!(
                "dim {} is not divisible by {} heads",
                self.dim, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::BadConfig(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}
