//! The kinematic attention encoder, the cross-attention decoder and the
//! encoder-only in-betweening stack.

mod cascaded;
mod checkpoint;
mod config;
mod encoding;
pub mod gradcheck;
mod inbetween;
mod kaa;
mod layers;
mod model;
mod params;

use thiserror::Error;

pub use cascaded::CascadedEncoder;
pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use config::{AggregationOrder, DecoderMode, NetworkConfig};
pub use encoding::{fourier_pos_embed, frame_embed, sinusoidal_step_embed};
pub use inbetween::{ConditionEmbedding, InbetweenModel};
pub use kaa::{kaa_round, structural_attention, temporal_attention, LatentState};
pub use layers::{attention, ffn, key_bias, linear, norm, self_block, AttentionCall, AttentionStats};
pub use model::{DecoderLayout, Mmdm};
pub use params::{ParamStore, Session};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("embedding dimension must be a positive multiple of {multiple}, got {dim}")]
    OddDim { dim: usize, multiple: usize },
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("input shape {got:?} does not match expected {expected:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("decoder layout error: {0}")]
    Layout(String),
    #[error("invalid segment split: {0}")]
    Split(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] mmdm_tensor::TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetworkError>;
