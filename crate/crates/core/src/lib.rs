//! Masked motion diffusion for motion completion, refinement and
//! in-betweening.
//!
//! The crate is layered bottom-up:
//!
//! - [`motion`]: motion containers, normalization and augmentation,
//!   the joint-level token packing, synthetic motion and file I/O.
//! - [`masking`]: pose-level, joint-level and confidence-weighted masks.
//! - [`diffusion`]: noise schedules, forward noising, DDPM/DDIM updates
//!   and the training losses.
//! - [`network`]: positional encodings, the kinematic attention encoder,
//!   the cross-attention decoder and the encoder-only in-betweening model.
//! - [`mocap`]: a simulated multi-view capture rig with matching,
//!   triangulation and tracking.
//! - [`metrics`]: PCP, MPJPE, acceleration error, precision/recall,
//!   L2-P, L2-Q and NPSS, plus report export.
//! - [`pipeline`]: training and the task drivers used by the CLI.

pub mod diffusion;
pub mod masking;
pub mod metrics;
pub mod mocap;
pub mod network;
pub mod motion;
pub mod pipeline;
pub mod rng;

pub use motion::MotionSequence;
