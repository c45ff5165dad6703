use serde::{Deserialize, Serialize};

use super::{NetworkError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationOrder {
    /// Structural attention, then temporal attention over star tokens.
    #[default]
    StructureFirst,
    /// Temporal attention first.
    TrajectoryFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderMode {
    /// Masked tokens carry the noised values plus the mask embedding.
    #[default]
    Diffusion,
    /// Masked tokens are the learned mask embedding alone.
    Mae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub depth: usize,
    pub dim: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    #[serde(default = "default_dec_depth")]
    pub dec_depth: usize,
    #[serde(default)]
    pub order: AggregationOrder,
    #[serde(default)]
    pub decoder_mode: DecoderMode,
    /// Re-add positional embeddings before every block instead of once per stage.
    #[serde(default)]
    pub pos_every_block: bool,
    #[serde(default = "default_seed")]
    pub init_seed: u64,
}

fn default_dec_depth() -> usize {
    3
}

fn default_seed() -> u64 {
    0
}

impl NetworkConfig {
    /// Full-size completion/refinement model.
    pub fn completion() -> Self {
        Self {
            depth: 9,
            dim: 512,
            heads: 4,
            head_dim: 32,
            ffn_dim: 512,
            in_dim: 3,
            out_dim: 3,
            dec_depth: 3,
            order: AggregationOrder::StructureFirst,
            decoder_mode: DecoderMode::Diffusion,
            pos_every_block: false,
            init_seed: 0,
        }
    }

    /// Full-size encoder-only in-betweening model.
    pub fn inbetween() -> Self {
        Self {
            depth: 8,
            dim: 512,
            heads: 8,
            head_dim: 64,
            ffn_dim: 1024,
            in_dim: 12,
            out_dim: 12,
            dec_depth: 0,
            ..Self::completion()
        }
    }

    /// Small model for unit tests and desk-scale runs.
    pub fn tiny(dim: usize, depth: usize, in_dim: usize) -> Self {
        Self {
            depth,
            dim,
            heads: 2,
            head_dim: dim / 2,
            ffn_dim: 2 * dim,
            in_dim,
            out_dim: in_dim,
            dec_depth: 1,
            ..Self::completion()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NetworkError::InvalidConfig(m.to_string()));
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.dim == 0 || self.dim % 4 != 0 {
            return Err(NetworkError::OddDim {
                dim: self.dim,
                multiple: 4,
            });
        }
        if self.heads == 0 || self.head_dim == 0 {
            return bad("heads and head_dim must be positive");
        }
        if self.ffn_dim == 0 || self.in_dim == 0 || self.out_dim == 0 {
            return bad("ffn_dim, in_dim and out_dim must be positive");
        }
        Ok(())
    }

    pub fn attn_dim(&self) -> usize {
        self.heads * self.head_dim
    }
}
