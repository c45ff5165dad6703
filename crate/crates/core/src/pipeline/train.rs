//! Training loops. Every draw comes from a stream derived from the master
//! seed and the step index, so runs are reproducible.

use mmdm_tensor::Tensor;

use super::config::{MaskPhase, ModelKind, TaskConfig};
use super::data::{PoseNormalizer, Sample, TokenNormalizer, FRAME_LEN};
use super::models::{CompletionModel, DiffusionSpec, InbetweenSystem};
use super::optim::{scheduled_lr, AdamW};
use super::{PipelineError, Result};
use crate::diffusion::{forward_diffuse, loss_full_var, loss_masked_var, DiffusionSchedule};
use crate::masking::build_mask;
use crate::motion::repr::{TOKENS, TOKEN_DIM};
use crate::motion::{MotionSequence, SegmentSplit};
use crate::network::{NetworkConfig, ParamStore, Session};
use crate::rng::{self, derive_seed};
use rand::Rng as _;

/// Loss curve and validation probes of one training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// `(phase, step, mean batch loss)`
    pub losses: Vec<(usize, usize, f64)>,
    /// `(phase, step, probe loss)`; step 0 is the phase's starting point.
    pub probes: Vec<(usize, usize, f64)>,
}

impl TrainLog {
    pub fn probes_of(&self, phase: usize) -> Vec<(usize, f64)> {
        self.probes.iter().filter(|p| p.0 == phase).map(|p| (p.1, p.2)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# phase step loss\n");
        for (p, k, l) in &self.losses {
            s.push_str(&format!("{p} {k} {l:?}\n"));
        }
        s.push_str("# probes: phase step loss\n");
        for (p, k, l) in &self.probes {
            s.push_str(&format!("probe {p} {k} {l:?}\n"));
        }
        s
    }
}

/// One training example: clean signal, noised state, mask and step.
struct Item {
    cond: Tensor,
    x_k: Vec<f64>,
    target: Tensor,
    mask: Vec<bool>,
    k: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Loss {
    Masked,
    Full,
}

struct Phase<'a> {
    kind: ModelKind,
    masking: Option<&'a MaskPhase>,
    sched: DiffusionSchedule,
    loss: Loss,
    steps: usize,
}

fn pose_item(model: &CompletionModel, phase: &Phase, sample: &Sample, r: &mut rng::Rng) -> Result<Item> {
    let m = &sample.motion;
    let (frames, joints) = (m.frames(), m.joints());
    let mask = match phase.masking {
        Some(mp) => build_mask(&mp.with_seed(r.random()), frames, joints, Some(&sample.signals))?,
        None => vec![false; frames * joints],
    };
    let mut masked = m.clone();
    masked.set_mask(mask.clone())?;
    let (x0, _) = model.norm.to_model(&masked)?;
    let shape = vec![frames, joints, 3];
    let (k, eps) = match phase.kind {
        ModelKind::Mae => (0, vec![0.0; x0.len()]),
        _ => (r.random_range(1..=phase.sched.steps()), rng::normal_vec(r, x0.len())),
    };
    let x_k = forward_diffuse(&x0, k, &eps, &phase.sched)?;
    let target = match model.objective {
        super::config::Objective::Noise if phase.kind != ModelKind::Mae => eps,
        _ => x0.clone(),
    };
    Ok(Item {
        cond: Tensor::new(shape.clone(), x0)?,
        x_k,
        target: Tensor::new(shape, target)?,
        mask,
        k,
    })
}

fn item_loss(s: &mut Session, model: &CompletionModel, phase: &Phase, it: &Item) -> Result<mmdm_tensor::Var> {
    let xk = s.g.input(Tensor::new(it.cond.shape().to_vec(), it.x_k.clone())?);
    let y = model.forward(s, &it.cond, xk, &it.mask, it.k)?;
    Ok(match phase.loss {
        Loss::Masked => loss_masked_var(&mut s.g, y, &it.target, &it.mask)?,
        Loss::Full => loss_full_var(&mut s.g, y, &it.target)?,
    })
}

fn probe_items(model: &CompletionModel, phase: &Phase, data: &[Sample], n: usize, seed: u64) -> Result<Vec<Item>> {
    let mut r = rng::seeded(seed);
    (0..n).map(|i| pose_item(model, phase, &data[i % data.len()], &mut r)).collect()
}

fn probe_loss(model: &CompletionModel, phase: &Phase, items: &[Item]) -> Result<f64> {
    let mut total = 0.0;
    for it in items {
        let mut s = Session::frozen(&model.net.params);
        let l = item_loss(&mut s, model, phase, it)?;
        total += s.g.value(l).item();
    }
    Ok(total / items.len() as f64)
}

fn add_grads(acc: &mut Option<Vec<Tensor>>, g: Vec<Tensor>) {
    match acc {
        None => *acc = Some(g),
        Some(a) => {
            for (x, y) in a.iter_mut().zip(g) {
                x.data_mut().iter_mut().zip(y.data()).for_each(|(p, q)| *p += q);
            }
        }
    }
}

fn scale_grads(g: &mut [Tensor], c: f64) {
    for t in g {
        t.data_mut().iter_mut().for_each(|v| *v *= c);
    }
}

fn run_pose_phase(
    cfg: &TaskConfig,
    model: &mut CompletionModel,
    phase: &Phase,
    index: usize,
    data: &[Sample],
    log: &mut TrainLog,
) -> Result<()> {
    let t = &cfg.train;
    let probe_seed = derive_seed(cfg.seed, 0x9b0e + index as u64);
    let probes = probe_items(model, phase, data, t.probe_size, probe_seed)?;
    let mut best = (probe_loss(model, phase, &probes)?, model.net.params.clone());
    log.probes.push((index, 0, best.0));
    let mut opt = AdamW::new(&model.net.params, t);
    for step in 1..=phase.steps {
        let mut r = rng::seeded(derive_seed(cfg.seed, ((index as u64) << 40) | step as u64));
        let mut acc = None;
        let mut total = 0.0;
        for _ in 0..t.batch {
            let sample = &data[r.random_range(0..data.len())];
            let it = pose_item(model, phase, sample, &mut r)?;
            let mut s = Session::new(&model.net.params);
            let l = item_loss(&mut s, model, phase, &it)?;
            total += s.g.value(l).item();
            add_grads(&mut acc, s.param_grads(l)?);
        }
        let loss = total / t.batch as f64;
        if !loss.is_finite() {
            return Err(PipelineError::DivergedLoss { step });
        }
        let mut grads = acc.expect("batch is non-empty");
        scale_grads(&mut grads, 1.0 / t.batch as f64);
        opt.set_lr(scheduled_lr(t, step, phase.steps));
        opt.update(&mut model.net.params, &grads);
        log.losses.push((index, step, loss));
        if step % t.probe_every == 0 || step == phase.steps {
            let p = probe_loss(model, phase, &probes)?;
            log.probes.push((index, step, p));
            if p < best.0 {
                best = (p, model.net.params.clone());
            }
        }
    }
    model.net.params = best.1;
    Ok(())
}

fn network_config(cfg: &TaskConfig, in_dim: usize, fallback: NetworkConfig) -> Result<NetworkConfig> {
    let n = cfg.network.clone().unwrap_or(fallback);
    if n.in_dim != in_dim || n.out_dim != in_dim {
        return Err(PipelineError::Config(format!(
            "network.in_dim and network.out_dim must be {in_dim} for this model"
        )));
    }
    Ok(n)
}

fn generation_spec(cfg: &TaskConfig) -> DiffusionSpec {
    DiffusionSpec {
        steps: cfg.diffusion.steps,
        schedule: cfg.diffusion.schedule,
        tail: cfg.diffusion.tail,
        noisy_start: false,
    }
}

pub fn refinement_spec(cfg: &TaskConfig) -> DiffusionSpec {
    DiffusionSpec {
        steps: cfg.diffusion.refine_steps,
        schedule: cfg.diffusion.schedule,
        tail: cfg.diffusion.refine_tail,
        noisy_start: true,
    }
}

/// Trains a pose model. Completion and MAE run a pre-training phase with
/// `masking.pretrain` and a fine-tuning phase with `masking.finetune`, both
/// on the masked loss. Refinement pre-trains as completion, then fine-tunes
/// on the full loss with the noisy-start schedule. `init` skips the
/// pre-training phase and continues from the given model.
pub fn train_pose_model(
    cfg: &TaskConfig,
    kind: ModelKind,
    data: &[Sample],
    init: Option<CompletionModel>,
) -> Result<(CompletionModel, TrainLog)> {
    if data.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    if let Some(m) = &init {
        if !(m.kind == kind || (m.kind == ModelKind::Completion && kind == ModelKind::Refinement)) {
            return Err(PipelineError::Config(format!("cannot continue a {:?} model as {kind:?}", m.kind)));
        }
    }
    let skip_pre = init.is_some();
    let mut model = match init {
        Some(m) => m,
        None => {
            let norm = PoseNormalizer::fit(&data.iter().map(|s| s.motion.clone()).collect::<Vec<_>>())?;
            let net = network_config(cfg, 3, NetworkConfig::completion())?;
            let pre_kind = if kind == ModelKind::Refinement { ModelKind::Completion } else { kind };
            CompletionModel::new(pre_kind, net, norm, cfg.diffusion.objective, generation_spec(cfg))?
        }
    };
    let mut log = TrainLog::default();
    let t = &cfg.train;
    if !skip_pre {
        let pre = Phase {
            kind: model.kind,
            masking: Some(&cfg.masking.pretrain),
            sched: model.diffusion.build()?,
            loss: Loss::Masked,
            steps: t.pretrain_steps,
        };
        run_pose_phase(cfg, &mut model, &pre, 0, data, &mut log)?;
    }
    let fine = if kind == ModelKind::Refinement {
        model.kind = ModelKind::Refinement;
        model.diffusion = refinement_spec(cfg);
        Phase {
            kind,
            masking: None,
            sched: model.diffusion.build()?,
            loss: Loss::Full,
            steps: t.finetune_steps,
        }
    } else {
        model.kind = kind;
        Phase {
            kind,
            masking: Some(&cfg.masking.finetune),
            sched: model.diffusion.build()?,
            loss: Loss::Masked,
            steps: t.finetune_steps,
        }
    };
    run_pose_phase(cfg, &mut model, &fine, 1, data, &mut log)?;
    Ok((model, log))
}

fn token_item(sys: &InbetweenSystem, sched: &DiffusionSchedule, split: &SegmentSplit, seq: &[f64], r: &mut rng::Rng) -> Result<(Tensor, Tensor, Vec<bool>, usize)> {
    let x0 = sys.norm.to_model(seq);
    let k = r.random_range(1..=sched.steps());
    let eps = rng::normal_vec(r, x0.len());
    let noised = forward_diffuse(&x0, k, &eps, sched)?;
    let range = split.transition_range();
    let mut x = x0.clone();
    for t in range.clone() {
        x[t * FRAME_LEN..(t + 1) * FRAME_LEN].copy_from_slice(&noised[t * FRAME_LEN..(t + 1) * FRAME_LEN]);
    }
    let mask: Vec<bool> = (0..split.total() * TOKENS).map(|c| range.contains(&(c / TOKENS))).collect();
    let target = match sys.objective {
        super::config::Objective::Signal => x0,
        super::config::Objective::Noise => eps,
    };
    let shape = vec![split.total(), TOKENS, TOKEN_DIM];
    Ok((Tensor::new(shape.clone(), x)?, Tensor::new(shape, target)?, mask, k))
}

/// Trains the in-betweening model on `pretrain_steps + finetune_steps`
/// steps with the masked loss over transition frames. Windows of
/// `split.total()` frames are cut at random offsets from the sequences.
pub fn train_inbetween(cfg: &TaskConfig, data: &[MotionSequence], init: Option<InbetweenSystem>) -> Result<(InbetweenSystem, TrainLog)> {
    if data.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let split = cfg.split.split()?;
    let len = split.total();
    if let Some(m) = data.iter().find(|m| m.frames() < len) {
        return Err(PipelineError::Config(format!("sequence of {} frames is shorter than the split", m.frames())));
    }
    cfg.imputation.validate(FRAME_LEN)?;
    let mut sys = match init {
        Some(s) => s,
        None => {
            let norm = TokenNormalizer::fit(data, cfg.imputation.emphasis(FRAME_LEN))?;
            let net = network_config(cfg, TOKEN_DIM, NetworkConfig::inbetween())?;
            InbetweenSystem::new(net, norm, cfg.diffusion.objective, generation_spec(cfg))?
        }
    };
    let sched = sys.diffusion.build()?;
    let t = &cfg.train;
    let steps = t.pretrain_steps + t.finetune_steps;
    let window = |r: &mut rng::Rng| -> Vec<f64> {
        let m = &data[r.random_range(0..data.len())];
        let start = r.random_range(0..=m.frames() - len);
        m.values()[start * FRAME_LEN..(start + len) * FRAME_LEN].to_vec()
    };
    let loss_of = |s: &mut Session, sys: &InbetweenSystem, x: &Tensor, target: &Tensor, mask: &[bool], k: usize| -> Result<mmdm_tensor::Var> {
        let xv = s.g.input(x.clone());
        let y = sys.forward(s, xv, &split, cfg.imputation.label, k)?;
        Ok(loss_masked_var(&mut s.g, y, target, mask)?)
    };
    let mut pr = rng::seeded(derive_seed(cfg.seed, 0x9b0e));
    let mut probes = Vec::with_capacity(t.probe_size);
    for _ in 0..t.probe_size {
        let w = window(&mut pr);
        probes.push(token_item(&sys, &sched, &split, &w, &mut pr)?);
    }
    let probe = |sys: &InbetweenSystem| -> Result<f64> {
        let mut total = 0.0;
        for (x, target, mask, k) in &probes {
            let mut s = Session::frozen(&sys.net.params);
            let l = loss_of(&mut s, sys, x, target, mask, *k)?;
            total += s.g.value(l).item();
        }
        Ok(total / probes.len() as f64)
    };
    let mut log = TrainLog::default();
    let mut best: (f64, ParamStore) = (probe(&sys)?, sys.net.params.clone());
    log.probes.push((0, 0, best.0));
    let mut opt = AdamW::new(&sys.net.params, t);
    for step in 1..=steps {
        let mut r = rng::seeded(derive_seed(cfg.seed, step as u64));
        let mut acc = None;
        let mut total = 0.0;
        for _ in 0..t.batch {
            let w = window(&mut r);
            let (x, target, mask, k) = token_item(&sys, &sched, &split, &w, &mut r)?;
            let mut s = Session::new(&sys.net.params);
            let l = loss_of(&mut s, &sys, &x, &target, &mask, k)?;
            total += s.g.value(l).item();
            add_grads(&mut acc, s.param_grads(l)?);
        }
        let loss = total / t.batch as f64;
        if !loss.is_finite() {
            return Err(PipelineError::DivergedLoss { step });
        }
        let mut grads = acc.expect("batch is non-empty");
        scale_grads(&mut grads, 1.0 / t.batch as f64);
        opt.set_lr(scheduled_lr(t, step, steps));
        opt.update(&mut sys.net.params, &grads);
        log.losses.push((0, step, loss));
        if step % t.probe_every == 0 || step == steps {
            let p = probe(&sys)?;
            log.probes.push((0, step, p));
            if p < best.0 {
                best = (p, sys.net.params.clone());
            }
        }
    }
    sys.net.params = best.1;
    Ok((sys, log))
}
