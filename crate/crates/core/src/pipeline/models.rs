//! Trained systems: a network together with its data transform and the
//! diffusion settings it was trained with.

use mmdm_tensor::{Tensor, Var};
use serde_json::{json, Map, Value};

use super::config::{ModelKind, Objective};
use super::data::{PoseNormalizer, TokenNormalizer, FRAME_LEN};
use super::{PipelineError, Result};
use crate::diffusion::{x0_from_eps, DiffusionSchedule, ScheduleKind};
use crate::motion::repr::{TOKENS, TOKEN_DIM};
use crate::motion::SegmentSplit;
use crate::network::{Checkpoint, DecoderMode, InbetweenModel, Mmdm, NetworkConfig, Session};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionSpec {
    pub steps: usize,
    pub schedule: ScheduleKind,
    pub tail: f64,
    /// Use the noisy-start ramp instead of `schedule`.
    pub noisy_start: bool,
}

impl DiffusionSpec {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        Ok(if self.noisy_start {
            DiffusionSchedule::noisy_start(self.steps, self.tail)?
        } else {
            DiffusionSchedule::new(self.steps, self.schedule, self.tail)?
        })
    }

    fn to_json(self) -> Value {
        json!({
            "steps": self.steps,
            "schedule": self.schedule,
            "tail": self.tail,
            "noisy_start": self.noisy_start,
        })
    }

    fn from_json(v: &Value) -> Result<Self> {
        let bad = || PipelineError::Checkpoint("malformed diffusion metadata".into());
        Ok(Self {
            steps: v["steps"].as_u64().ok_or_else(bad)? as usize,
            schedule: serde_json::from_value(v["schedule"].clone()).map_err(|_| bad())?,
            tail: v["tail"].as_f64().ok_or_else(bad)?,
            noisy_start: v["noisy_start"].as_bool().ok_or_else(bad)?,
        })
    }
}

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Completion => "completion",
        ModelKind::Refinement => "refinement",
        ModelKind::Inbetween => "inbetween",
        ModelKind::Mae => "mae",
    }
}

fn kind_from_name(s: &str) -> Result<ModelKind> {
    Ok(match s {
        "completion" => ModelKind::Completion,
        "refinement" => ModelKind::Refinement,
        "inbetween" => ModelKind::Inbetween,
        "mae" => ModelKind::Mae,
        other => return Err(PipelineError::Checkpoint(format!("unknown model kind `{other}`"))),
    })
}

fn meta_f64(meta: &Map<String, Value>, key: &str) -> Result<f64> {
    meta.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| PipelineError::Checkpoint(format!("missing `{key}`")))
}

fn meta_vec(meta: &Map<String, Value>, key: &str) -> Result<Vec<f64>> {
    let v = meta
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| PipelineError::Checkpoint(format!("missing `{key}`")))?;
    v.iter()
        .map(|x| x.as_f64().ok_or_else(|| PipelineError::Checkpoint(format!("bad `{key}`"))))
        .collect()
}

fn meta_objective(meta: &Map<String, Value>) -> Result<Objective> {
    serde_json::from_value(meta.get("objective").cloned().unwrap_or(Value::Null))
        .map_err(|_| PipelineError::Checkpoint("missing `objective`".into()))
}

/// Completion, refinement or MAE model over `T x J x 3` poses.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionModel {
    pub kind: ModelKind,
    pub net: Mmdm,
    pub norm: PoseNormalizer,
    pub objective: Objective,
    pub diffusion: DiffusionSpec,
}

impl CompletionModel {
    pub fn new(kind: ModelKind, mut cfg: NetworkConfig, norm: PoseNormalizer, objective: Objective, diffusion: DiffusionSpec) -> Result<Self> {
        if kind == ModelKind::Inbetween {
            return Err(PipelineError::Config("in-betweening uses InbetweenSystem".into()));
        }
        cfg.decoder_mode = if kind == ModelKind::Mae {
            DecoderMode::Mae
        } else {
            DecoderMode::Diffusion
        };
        Ok(Self {
            kind,
            net: Mmdm::new(cfg)?,
            norm,
            objective: if kind == ModelKind::Mae { Objective::Signal } else { objective },
            diffusion,
        })
    }

    /// Network output for one sequence. Refinement feeds the current state to
    /// the encoder with nothing hidden; MAE ignores the state.
    pub fn forward(&self, s: &mut Session, cond: &Tensor, x_k: Var, mask: &[bool], k: usize) -> Result<Var> {
        Ok(match self.kind {
            ModelKind::Refinement => {
                let state = s.g.value(x_k).clone();
                let none = vec![false; mask.len()];
                self.net.forward(s, &state, x_k, &none, k)?
            }
            ModelKind::Mae => self.net.forward(s, cond, x_k, mask, 0)?,
            _ => self.net.forward(s, cond, x_k, mask, k)?,
        })
    }

    /// Signal estimate at step `k`.
    pub fn predict_x0(&self, sched: &DiffusionSchedule, cond: &Tensor, x_k: &[f64], mask: &[bool], k: usize) -> Result<Vec<f64>> {
        let mut s = Session::frozen(&self.net.params);
        let xv = s.g.input(Tensor::new(cond.shape().to_vec(), x_k.to_vec())?);
        let y = self.forward(&mut s, cond, xv, mask, k)?;
        let out = s.g.value(y).data().to_vec();
        Ok(match self.objective {
            Objective::Signal => out,
            Objective::Noise => x0_from_eps(x_k, &out, k, sched)?,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = Map::new();
        meta.insert("scale".into(), json!(self.norm.scale));
        meta.insert("objective".into(), json!(self.objective));
        meta.insert("diffusion".into(), self.diffusion.to_json());
        Checkpoint {
            model: kind_name(self.kind).into(),
            config: self.net.cfg.clone(),
            meta,
            params: self.net.params.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        let kind = kind_from_name(&c.model)?;
        if kind == ModelKind::Inbetween {
            return Err(PipelineError::Checkpoint("expected a pose model, found an in-betweening model".into()));
        }
        Ok(Self {
            kind,
            norm: PoseNormalizer {
                scale: meta_f64(&c.meta, "scale")?,
            },
            objective: meta_objective(&c.meta)?,
            diffusion: DiffusionSpec::from_json(c.meta.get("diffusion").unwrap_or(&Value::Null))?,
            net: Mmdm::from_params(c.config, c.params)?,
        })
    }
}

/// Encoder-only in-betweening model over joint-level tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct InbetweenSystem {
    pub net: InbetweenModel,
    pub norm: TokenNormalizer,
    pub objective: Objective,
    pub diffusion: DiffusionSpec,
}

impl InbetweenSystem {
    pub fn new(cfg: NetworkConfig, norm: TokenNormalizer, objective: Objective, diffusion: DiffusionSpec) -> Result<Self> {
        if cfg.in_dim != TOKEN_DIM || cfg.out_dim != TOKEN_DIM {
            return Err(PipelineError::Config(format!("in-betweening needs in_dim = out_dim = {TOKEN_DIM}")));
        }
        Ok(Self {
            net: InbetweenModel::new(cfg)?,
            norm,
            objective,
            diffusion,
        })
    }

    pub fn forward(&self, s: &mut Session, x: Var, split: &SegmentSplit, label: Option<usize>, k: usize) -> Result<Var> {
        Ok(self.net.forward(s, x, split, label, k)?)
    }

    /// Full-sequence signal estimate for the network input `x` (clean
    /// boundaries, current transition state) at step `k`.
    pub fn predict_x0(&self, sched: &DiffusionSchedule, x: &[f64], split: &SegmentSplit, label: Option<usize>, k: usize) -> Result<Vec<f64>> {
        let t = Tensor::new(vec![split.total(), TOKENS, TOKEN_DIM], x.to_vec())?;
        let out = self.net.predict(&t, split, label, k)?;
        Ok(match self.objective {
            Objective::Signal => out,
            Objective::Noise => x0_from_eps(x, &out, k, sched)?,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = Map::new();
        meta.insert("objective".into(), json!(self.objective));
        meta.insert("diffusion".into(), self.diffusion.to_json());
        meta.insert("mean".into(), json!(self.norm.mean));
        meta.insert("std".into(), json!(self.norm.std));
        meta.insert("emphasis".into(), json!(self.norm.emphasis));
        Checkpoint {
            model: kind_name(ModelKind::Inbetween).into(),
            config: self.net.cfg.clone(),
            meta,
            params: self.net.params.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if kind_from_name(&c.model)? != ModelKind::Inbetween {
            return Err(PipelineError::Checkpoint(format!("expected an in-betweening model, found `{}`", c.model)));
        }
        let norm = TokenNormalizer {
            mean: meta_vec(&c.meta, "mean")?,
            std: meta_vec(&c.meta, "std")?,
            emphasis: meta_vec(&c.meta, "emphasis")?,
        };
        if norm.mean.len() != FRAME_LEN || norm.std.len() != FRAME_LEN || norm.emphasis.len() != FRAME_LEN {
            return Err(PipelineError::Checkpoint("normalizer has the wrong length".into()));
        }
        Ok(Self {
            norm,
            objective: meta_objective(&c.meta)?,
            diffusion: DiffusionSpec::from_json(c.meta.get("diffusion").unwrap_or(&Value::Null))?,
            net: InbetweenModel::from_params(c.config, c.params)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{parse_checkpoint, write_checkpoint};

    fn spec(noisy_start: bool) -> DiffusionSpec {
        DiffusionSpec {
            steps: 20,
            schedule: ScheduleKind::ScaledLinear,
            tail: if noisy_start { 0.9 } else { 0.01 },
            noisy_start,
        }
    }

    #[test]
    fn pose_model_checkpoint_round_trip() {
        let m = CompletionModel::new(
            ModelKind::Refinement,
            NetworkConfig::tiny(16, 1, 3),
            PoseNormalizer { scale: 0.37 },
            Objective::Noise,
            spec(true),
        )
        .unwrap();
        let text = write_checkpoint(&m.to_checkpoint()).unwrap();
        let back = CompletionModel::from_checkpoint(parse_checkpoint(&text).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn inbetween_checkpoint_round_trip() {
        let norm = TokenNormalizer {
            mean: (0..FRAME_LEN).map(|i| i as f64 * 0.1).collect(),
            std: vec![0.3; FRAME_LEN],
            emphasis: vec![1.0; FRAME_LEN],
        };
        let m = InbetweenSystem::new(NetworkConfig::tiny(16, 1, 12), norm, Objective::Signal, spec(false)).unwrap();
        let text = write_checkpoint(&m.to_checkpoint()).unwrap();
        let back = InbetweenSystem::from_checkpoint(parse_checkpoint(&text).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(CompletionModel::from_checkpoint(parse_checkpoint(&text).unwrap()).is_err());
    }
}
