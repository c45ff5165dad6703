//! Task configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::diffusion::{ScheduleKind, DEFAULT_TAIL};
use crate::masking::{MaskPattern, MaskingConfig};
use crate::motion::repr::TOKEN_DIM;
use crate::motion::{SegmentSplit, SynthKind};
use crate::network::NetworkConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Complete,
    Refine,
    Inbetween,
    Train,
    Simulate,
    Eval,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Self::Complete => "complete",
            Self::Refine => "refine",
            Self::Inbetween => "inbetween",
            Self::Train => "train",
            Self::Simulate => "simulate",
            Self::Eval => "eval",
        }
    }
}

/// What the network is trained to output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Signal,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Ddpm,
    Ddim,
}

/// Which model `train` produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Completion,
    Refinement,
    Inbetween,
    Mae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionParams {
    pub steps: usize,
    pub schedule: ScheduleKind,
    pub tail: f64,
    /// Step count and final `alpha_bar` of the noisy-start refinement schedule.
    pub refine_steps: usize,
    pub refine_tail: f64,
    pub objective: Objective,
    pub sampler: SamplerKind,
    /// Speed-up ratio for DDIM.
    pub ddim_stride: usize,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            steps: 1000,
            schedule: ScheduleKind::ScaledLinear,
            tail: DEFAULT_TAIL,
            refine_steps: 50,
            refine_tail: 0.98,
            objective: Objective::Signal,
            sampler: SamplerKind::Ddpm,
            ddim_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskPhase {
    pub pattern: MaskPattern,
    pub ratio: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "yes")]
    pub force_invisible: bool,
}

fn default_omega() -> f64 {
    MaskingConfig::DEFAULT_OMEGA
}

fn yes() -> bool {
    true
}

impl MaskPhase {
    pub fn new(pattern: MaskPattern, ratio: f64) -> Self {
        Self {
            pattern,
            ratio,
            omega: default_omega(),
            force_invisible: true,
        }
    }

    pub fn with_seed(&self, seed: u64) -> MaskingConfig {
        MaskingConfig {
            pattern: self.pattern,
            ratio: self.ratio,
            omega: self.omega,
            seed,
            force_invisible: self.force_invisible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskingPhases {
    pub pretrain: MaskPhase,
    pub finetune: MaskPhase,
    /// Used when a completion input carries no mask of its own.
    pub inference: MaskPhase,
}

impl Default for MaskingPhases {
    fn default() -> Self {
        Self {
            pretrain: MaskPhase::new(MaskPattern::PoseLevel, 0.5),
            finetune: MaskPhase::new(MaskPattern::Weighted, 0.3),
            inference: MaskPhase::new(MaskPattern::Weighted, 0.3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub model: ModelKind,
    pub pretrain_steps: usize,
    pub finetune_steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// When set, the rate follows a cosine from `lr` down to this value over
    /// each phase.
    pub lr_final: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Validation-probe and checkpoint interval.
    pub probe_every: usize,
    pub probe_size: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            model: ModelKind::Completion,
            pretrain_steps: 2000,
            finetune_steps: 1000,
            batch: 4,
            lr: 1e-5,
            lr_final: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            probe_every: 500,
            probe_size: 8,
        }
    }
}

/// Where task inputs come from: a motion file, or a seeded synthetic set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataParams {
    pub input: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub kinds: Vec<String>,
    pub count: usize,
    /// Frames per synthetic sequence; `seq_len` when absent.
    pub frames: Option<usize>,
    pub joints: usize,
    /// Standard deviation in meters of the noise added for refinement.
    pub noise_m: f64,
    /// Detector noise and occlusion used to derive quality signals.
    pub signal_noise_px: f64,
    pub signal_occl_prob: f64,
}

impl Default for DataParams {
    fn default() -> Self {
        Self {
            input: None,
            ground_truth: None,
            kinds: SynthKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            count: 16,
            frames: None,
            joints: 17,
            noise_m: 0.05,
            signal_noise_px: 2.0,
            signal_occl_prob: 0.05,
        }
    }
}

impl DataParams {
    pub fn kinds(&self) -> Result<Vec<SynthKind>> {
        if self.kinds.is_empty() {
            return Err(PipelineError::Config("data.kinds is empty".into()));
        }
        self.kinds
            .iter()
            .map(|k| k.parse().map_err(|_| PipelineError::Config(format!("unknown motion kind `{k}`"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitParams {
    pub preceding: usize,
    pub transition: usize,
    pub succeeding: usize,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            preceding: 10,
            transition: 30,
            succeeding: 10,
        }
    }
}

impl SplitParams {
    pub fn split(&self) -> Result<SegmentSplit> {
        let total = self.preceding + self.transition + self.succeeding;
        SegmentSplit::new(self.preceding, self.transition, self.succeeding, total)
            .map_err(|e| PipelineError::BadSplit(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImputationConfig {
    pub emphasis_factor: f64,
    /// Feature indices within a frame (`token * 12 + slot`) scaled by the
    /// emphasis factor.
    pub emphasis_dims: Vec<usize>,
    pub guidance_scale: f64,
    pub label: Option<usize>,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self {
            emphasis_factor: 10.0,
            emphasis_dims: (0..TOKEN_DIM).collect(),
            guidance_scale: 0.0,
            label: None,
        }
    }
}

impl ImputationConfig {
    pub fn validate(&self, frame_len: usize) -> Result<()> {
        if !(self.emphasis_factor > 0.0 && self.emphasis_factor.is_finite()) {
            return Err(PipelineError::Config(format!(
                "imputation.emphasis_factor must be positive, got {}",
                self.emphasis_factor
            )));
        }
        if let Some(&d) = self.emphasis_dims.iter().find(|&&d| d >= frame_len) {
            return Err(PipelineError::Config(format!("emphasis dim {d} is out of range")));
        }
        if !(self.guidance_scale >= 0.0) {
            return Err(PipelineError::Config("imputation.guidance_scale must be >= 0".into()));
        }
        Ok(())
    }

    /// Diagonal of the emphasis projection over one frame.
    pub fn emphasis(&self, frame_len: usize) -> Vec<f64> {
        let mut m = vec![1.0; frame_len];
        for &d in &self.emphasis_dims {
            m[d] = self.emphasis_factor;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MocapParams {
    pub people: usize,
    pub frames: usize,
    pub joints: usize,
    pub rig: Option<PathBuf>,
    pub noise_px: f64,
    pub occl_prob: f64,
    /// Per-joint occlusion overrides as `[joint, probability]`.
    pub joint_occl: Vec<(usize, f64)>,
    pub max_epipolar_px: f64,
    /// Spacing in meters between simulated people.
    pub spacing: f64,
}

impl Default for MocapParams {
    fn default() -> Self {
        Self {
            people: 2,
            frames: 30,
            joints: 17,
            rig: None,
            noise_px: 2.0,
            occl_prob: 0.05,
            joint_occl: Vec::new(),
            max_epipolar_px: 40.0,
            spacing: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    /// Metric names; empty selects every metric the inputs support.
    pub metrics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    /// Defaults to the preset for the task's model.
    #[serde(default)]
    pub network: Option<NetworkConfig>,
    #[serde(default)]
    pub diffusion: DiffusionParams,
    #[serde(default)]
    pub masking: MaskingPhases,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub data: DataParams,
    #[serde(default)]
    pub split: SplitParams,
    #[serde(default)]
    pub imputation: ImputationConfig,
    #[serde(default)]
    pub mocap: MocapParams,
    #[serde(default)]
    pub eval: EvalParams,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_seq_len() -> usize {
    10
}

impl TaskConfig {
    pub fn new(task: Task) -> Self {
        toml::from_str(&format!("task = \"{}\"", task.name())).expect("minimal config parses")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.seq_len < 2 {
            return bad(format!("seq_len must be at least 2, got {}", self.seq_len));
        }
        let d = &self.diffusion;
        if d.steps == 0 || d.refine_steps == 0 {
            return bad("diffusion steps must be positive".into());
        }
        if d.ddim_stride == 0 {
            return bad("diffusion.ddim_stride must be positive".into());
        }
        if !(d.refine_tail > 0.0 && d.refine_tail < 1.0) {
            return bad("diffusion.refine_tail must lie in (0, 1)".into());
        }
        for (name, m) in [
            ("pretrain", &self.masking.pretrain),
            ("finetune", &self.masking.finetune),
            ("inference", &self.masking.inference),
        ] {
            m.with_seed(0)
                .validate()
                .map_err(|e| PipelineError::Config(format!("masking.{name}: {e}")))?;
        }
        let t = &self.train;
        if t.batch == 0 || t.probe_every == 0 || t.probe_size == 0 {
            return bad("train.batch, train.probe_every and train.probe_size must be positive".into());
        }
        if !(t.lr > 0.0) || !(t.weight_decay >= 0.0) || t.lr_final.is_some_and(|f| !(f > 0.0)) {
            return bad("train.lr and train.lr_final must be positive and train.weight_decay non-negative".into());
        }
        if let Some(n) = &self.network {
            n.validate().map_err(|e| PipelineError::Config(format!("network: {e}")))?;
        }
        self.data.kinds()?;
        if self.data.count == 0 {
            return bad("data.count must be positive".into());
        }
        if self.task == Task::Inbetween || (self.task == Task::Train && t.model == ModelKind::Inbetween) {
            self.split.split()?;
        }
        if self.mocap.people == 0 || self.mocap.frames == 0 {
            return bad("mocap.people and mocap.frames must be positive".into());
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.data.frames.unwrap_or(self.seq_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TaskConfig::parse("task = \"complete\"").unwrap();
        assert_eq!(c.seq_len, 10);
        assert_eq!(c.train.lr, 1e-5);
        assert_eq!(c.masking.pretrain.pattern, MaskPattern::PoseLevel);
        assert_eq!(c.masking.pretrain.ratio, 0.5);
        assert_eq!(c.imputation.emphasis_factor, 10.0);
        assert_eq!(c.split.transition, 30);
        assert_eq!(c.diffusion.steps, 1000);
        assert_eq!(c.diffusion.refine_steps, 50);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            TaskConfig::parse("task = \"train\"\nlearning_rate = 3"),
            Err(PipelineError::Config(_))
        ));
        assert!(TaskConfig::parse("task = \"train\"\n[train]\nsteps = 3").is_err());
    }

    #[test]
    fn dotted_keys() {
        let c = TaskConfig::parse("task = \"train\"\ntrain.lr = 0.001\nmasking.finetune.ratio = 0.2\nmasking.finetune.pattern = \"C\"")
            .unwrap();
        assert_eq!(c.train.lr, 1e-3);
        assert_eq!(c.masking.finetune.ratio, 0.2);
    }

    #[test]
    fn round_trip() {
        let c = TaskConfig::new(Task::Inbetween);
        assert_eq!(TaskConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn emphasis_diagonal() {
        let m = ImputationConfig::default().emphasis(22 * 12);
        assert_eq!(m.iter().filter(|&&v| v == 10.0).count(), 12);
        assert!(m[12..].iter().all(|&v| v == 1.0));
    }
}
