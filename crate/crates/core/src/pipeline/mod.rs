//! Task drivers behind the command-line tool: training, completion,
//! refinement, in-betweening, capture simulation and evaluation.

pub mod complete;
pub mod config;
pub mod data;
pub mod eval;
pub mod inbetween;
pub mod mae;
pub mod models;
pub mod optim;
pub mod simulate;
pub mod train;

use thiserror::Error;

use crate::network::{load_checkpoint, Checkpoint};

pub use complete::{complete_motion, refine_motion, run_completion, run_refinement, sliding, window_starts, TaskOutput};
pub use config::{ImputationConfig, ModelKind, Objective, SamplerKind, Task, TaskConfig};
pub use data::{capture_signals, completion_dataset, token_dataset, PoseNormalizer, Sample, TokenNormalizer};
pub use eval::{evaluate, run_eval};
pub use inbetween::{inbetween_motion, interpolate_transition, run_inbetween, sample_transition, TransitionModel};
pub use mae::mae_reconstruct;
pub use models::{CompletionModel, DiffusionSpec, InbetweenSystem};
pub use optim::AdamW;
pub use simulate::{run_simulate, Simulation};
pub use train::{train_inbetween, train_pose_model, TrainLog};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("no checkpoint given")]
    NoCheckpoint,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("loss diverged at step {step}")]
    DivergedLoss { step: usize },
    #[error("bad split: {0}")]
    BadSplit(String),
    #[error(transparent)]
    Motion(#[from] crate::motion::MotionError),
    #[error(transparent)]
    Mask(#[from] crate::masking::MaskError),
    #[error(transparent)]
    Diffusion(#[from] crate::diffusion::DiffusionError),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Mocap(#[from] crate::mocap::MocapError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error(transparent)]
    Tensor(#[from] mmdm_tensor::TensorError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Errors caused by the configuration rather than by the run.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_) | Self::NoCheckpoint | Self::BadSplit(_))
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// SHA-256 of the normalized config text.
pub fn config_hash(cfg: &TaskConfig) -> String {
    crate::metrics::config_hash(&cfg.to_toml())
}

pub fn load_model_checkpoint(cfg: &TaskConfig) -> Result<Checkpoint> {
    let path = cfg.checkpoint.as_ref().ok_or(PipelineError::NoCheckpoint)?;
    Ok(load_checkpoint(path)?)
}
