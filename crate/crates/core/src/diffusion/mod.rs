//! Noise schedules, forward noising, reverse samplers and training losses.

mod loss;
mod sampler;
mod schedule;

use thiserror::Error;

pub use loss::{loss_full, loss_full_var, loss_masked, loss_masked_var};
pub use sampler::{
    ddim_timesteps, ddim_timesteps_jumps, eps_from_x0, forward_diffuse, noised_state, posterior_mean, restore_unmasked,
    reverse_step_ddim, reverse_step_ddpm, sample_loop, x0_from_eps, NoisedState, Sampler,
};
pub use schedule::{DiffusionSchedule, ScheduleKind, DEFAULT_TAIL};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("schedule needs at least one step")]
    NoSteps,
    #[error("beta {value} at step {step} is outside (0, 1)")]
    InvalidBeta { step: usize, value: f64 },
    #[error("cannot reach alpha_bar <= {tail} in {steps} steps with beta < 1")]
    UnreachableTail { steps: usize, tail: f64 },
    #[error("step {step} out of range 0..={max}")]
    StepOutOfRange { step: usize, max: usize },
    #[error("next step {next} must be smaller than current step {current}")]
    StepOrder { current: usize, next: usize },
    #[error("length mismatch: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("masked loss over an empty mask")]
    EmptyMask,
    #[error("speed-up ratio must be positive")]
    ZeroStride,
    #[error(transparent)]
    Tensor(#[from] mmdm_tensor::TensorError),
    #[error("model failed: {0}")]
    Model(String),
}

pub type Result<T> = std::result::Result<T, DiffusionError>;
