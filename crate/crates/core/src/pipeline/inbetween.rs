//! In-betweening by reverse diffusion with boundary imputation, optional
//! emphasis projection and dense gradient guidance.

use mmdm_tensor::Tensor;

use super::complete::sampler_of;
use super::config::{ImputationConfig, Objective, TaskConfig};
use super::data::{token_dataset, FRAME_LEN};
use super::models::InbetweenSystem;
use super::{PipelineError, Result};
use crate::diffusion::{ddim_timesteps, posterior_mean, reverse_step_ddim, DiffusionSchedule, Sampler};
use crate::metrics::{l2p, l2q, npss, MetricReport};
use crate::motion::repr::{positions_from_tokens, rotations_from_tokens, TOKENS, TOKEN_DIM};
use crate::motion::{load_motion, MotionSequence, SegmentSplit};
use crate::network::Session;
use crate::rng::{self, derive_seed};

/// What the sampler needs from a model: a full-sequence signal estimate and
/// the gradient of the boundary objective with respect to the transition
/// state.
pub trait TransitionModel {
    fn predict(&self, x: &[f64], k: usize) -> Result<Vec<f64>>;

    /// Gradient over the transition frames of
    /// `|known_p - x0_p|^2 + |known_r - x0_r|^2`, where `x0` is the estimate
    /// for `x`.
    fn boundary_grad(&self, x: &[f64], k: usize) -> Result<Vec<f64>>;
}

/// [`InbetweenSystem`] bound to a split, a label and its schedule.
pub struct NetTransition<'a> {
    pub sys: &'a InbetweenSystem,
    pub split: SegmentSplit,
    pub label: Option<usize>,
    pub sched: &'a DiffusionSchedule,
}

impl TransitionModel for NetTransition<'_> {
    fn predict(&self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        self.sys.predict_x0(self.sched, x, &self.split, self.label, k)
    }

    fn boundary_grad(&self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        let sp = self.split;
        let (p, tr, su) = (sp.preceding, sp.transition, sp.succeeding);
        let part = |a: usize, n: usize| Tensor::new(vec![n, TOKENS, TOKEN_DIM], x[a * FRAME_LEN..(a + n) * FRAME_LEN].to_vec());
        let mut s = Session::frozen(&self.sys.net.params);
        let pre = s.g.input(part(0, p)?);
        let post = s.g.input(part(p + tr, su)?);
        let d = s.g.leaf(part(p, tr)?, true);
        let xv = s.g.concat(&[pre, d, post], 0)?;
        let mut y = self.sys.forward(&mut s, xv, &sp, self.label, k)?;
        if self.sys.objective == Objective::Noise {
            let ab = self.sched.alpha_bar(k);
            let e = s.g.scale(y, (1.0 - ab).sqrt())?;
            let diff = s.g.sub(xv, e)?;
            y = s.g.scale(diff, 1.0 / ab.sqrt())?;
        }
        let yp = s.g.slice(y, 0, 0, p)?;
        let yr = s.g.slice(y, 0, p + tr, su)?;
        let ep = s.g.sub(yp, pre)?;
        let er = s.g.sub(yr, post)?;
        let ep = s.g.square(ep)?;
        let er = s.g.square(er)?;
        let fp = s.g.sum(ep)?;
        let fr = s.g.sum(er)?;
        let f = s.g.add(fp, fr)?;
        let mut grads = s.g.backward(f)?;
        Ok(grads
            .take(d)
            .map(Tensor::into_data)
            .unwrap_or_else(|| vec![0.0; tr * FRAME_LEN]))
    }
}

/// Generates the transition of `known` (model space, `T x 22 x 12`; only
/// the boundary frames are read). Each step writes the current transition
/// state between the known boundaries, predicts the signal, takes the
/// posterior step on the transition and shifts it by `-scale * grad` when
/// `scale > 0`. Returns the full sequence in model space.
pub fn sample_transition<M: TransitionModel>(
    model: &M,
    sched: &DiffusionSchedule,
    sampler: Sampler,
    known: &[f64],
    split: &SegmentSplit,
    scale: f64,
    r: &mut rng::Rng,
) -> Result<Vec<f64>> {
    let n = split.total() * FRAME_LEN;
    if known.len() != n {
        return Err(PipelineError::BadSplit(format!("{} values for a {}-frame split", known.len(), split.total())));
    }
    let range = split.transition_range();
    let (a, b) = (range.start * FRAME_LEN, range.end * FRAME_LEN);
    let mut d = rng::normal_vec(r, b - a);
    let mut x = known.to_vec();
    let pairs: Vec<(usize, usize)> = match sampler {
        Sampler::Ddpm => (1..=sched.steps()).rev().map(|k| (k, k - 1)).collect(),
        Sampler::Ddim(stride) => ddim_timesteps(sched.steps(), stride)?.windows(2).map(|w| (w[0], w[1])).collect(),
    };
    for (k, next) in pairs {
        x[a..b].copy_from_slice(&d);
        let x0 = model.predict(&x, k)?;
        let x0_tr = &x0[a..b];
        let mut step = match sampler {
            Sampler::Ddpm => posterior_mean(x0_tr, &d, k, sched),
            Sampler::Ddim(_) => reverse_step_ddim(x0_tr, &d, k, next, sched)?,
        };
        if scale > 0.0 {
            let g = model.boundary_grad(&x, k)?;
            step.iter_mut().zip(&g).for_each(|(m, g)| *m -= scale * g);
        }
        if sampler == Sampler::Ddpm && k > 1 {
            let sd = sched.posterior_variance(k).sqrt();
            step.iter_mut().for_each(|m| *m += sd * rng::normal(r));
        }
        d = step;
    }
    x[a..b].copy_from_slice(&d);
    Ok(x)
}

/// Per-channel linear interpolation between the last preceding and the
/// first succeeding frame.
pub fn interpolate_transition(values: &[f64], split: &SegmentSplit) -> Vec<f64> {
    let mut out = values.to_vec();
    let range = split.transition_range();
    let (lo, hi) = (range.start - 1, range.end);
    for t in range {
        let w = (t - lo) as f64 / (hi - lo) as f64;
        for c in 0..FRAME_LEN {
            let (x0, x1) = (values[lo * FRAME_LEN + c], values[hi * FRAME_LEN + c]);
            out[t * FRAME_LEN + c] = x0 + w * (x1 - x0);
        }
    }
    out
}

fn copy_boundaries(out: &mut [f64], input: &[f64], split: &SegmentSplit) {
    for t in (0..split.total()).filter(|&t| split.is_boundary(t)) {
        out[t * FRAME_LEN..(t + 1) * FRAME_LEN].copy_from_slice(&input[t * FRAME_LEN..(t + 1) * FRAME_LEN]);
    }
}

/// Generated sequence (boundaries equal to the input bit for bit) and the
/// interpolation baseline.
pub struct Inbetweened {
    pub output: MotionSequence,
    pub baseline: MotionSequence,
}

pub fn inbetween_motion(
    sys: &InbetweenSystem,
    input: &MotionSequence,
    split: &SegmentSplit,
    imput: &ImputationConfig,
    sampler: Sampler,
    seed: u64,
) -> Result<Inbetweened> {
    if input.frames() != split.total() || input.joints() != TOKENS || input.dim() != TOKEN_DIM {
        return Err(PipelineError::BadSplit(format!(
            "input is {:?}, split needs {} frames of {TOKENS} x {TOKEN_DIM}",
            input.shape(),
            split.total()
        )));
    }
    imput.validate(FRAME_LEN)?;
    if imput.emphasis(FRAME_LEN) != sys.norm.emphasis {
        return Err(PipelineError::Config("imputation emphasis differs from the trained model's".into()));
    }
    let sched = sys.diffusion.build()?;
    let net = NetTransition {
        sys,
        split: *split,
        label: imput.label,
        sched: &sched,
    };
    let known = sys.norm.to_model(input.values());
    let mut r = rng::seeded(seed);
    let gen = sample_transition(&net, &sched, sampler, &known, split, imput.guidance_scale, &mut r)?;
    let mut out = sys.norm.from_model(&gen);
    copy_boundaries(&mut out, input.values(), split);
    Ok(Inbetweened {
        output: input.with_values(out)?,
        baseline: input.with_values(interpolate_transition(input.values(), split))?,
    })
}

/// Transition-window positions, rotations (as `T x 21 x 4`) and the
/// matching ground truth.
fn transition_metrics(pred: &MotionSequence, gt: &MotionSequence, split: &SegmentSplit) -> Result<(f64, f64, f64)> {
    let range = split.transition_range();
    let pos = |m: &MotionSequence| -> Result<MotionSequence> {
        Ok(positions_from_tokens(m, [0.0, 0.0])?.frame_range(range.start, range.len())?)
    };
    let rot = |m: &MotionSequence| -> Result<MotionSequence> {
        let q: Vec<f64> = rotations_from_tokens(m).iter().flatten().copied().collect();
        Ok(MotionSequence::new(m.frames(), TOKENS - 1, 4, q)?.frame_range(range.start, range.len())?)
    };
    let (pp, pg) = (pos(pred)?, pos(gt)?);
    let (rp, rg) = (rot(pred)?, rot(gt)?);
    let npss_v = if range.len() >= 2 { npss(&rp, &rg)? } else { 0.0 };
    Ok((l2p(&pp, &pg)?, l2q(&rp, &rg)?, npss_v))
}

pub struct InbetweenOutput {
    pub outputs: Vec<MotionSequence>,
    pub report: MetricReport,
}

pub fn run_inbetween(cfg: &TaskConfig, sys: &InbetweenSystem, imput: &ImputationConfig) -> Result<InbetweenOutput> {
    let split = cfg.split.split()?;
    let inputs = match &cfg.data.input {
        Some(p) => vec![load_motion(p)?],
        None => token_dataset(cfg, split.total())?,
    };
    let sampler = sampler_of(cfg);
    let mut sums = [0.0; 6];
    let mut outputs = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        let res = inbetween_motion(sys, input, &split, imput, sampler, derive_seed(cfg.seed, 0x1b + i as u64))?;
        let (a, b, c) = transition_metrics(&res.output, input, &split)?;
        let (d, e, f) = transition_metrics(&res.baseline, input, &split)?;
        for (s, v) in sums.iter_mut().zip([a, b, c, d, e, f]) {
            *s += v / inputs.len() as f64;
        }
        outputs.push(res.output);
    }
    let mut report = MetricReport::new(Some(cfg.seed), Some(super::config_hash(cfg)));
    for (name, v) in ["l2p", "l2q", "npss", "l2p.interp", "l2q.interp", "npss.interp"].iter().zip(sums) {
        report.set(name, v)?;
    }
    Ok(InbetweenOutput { outputs, report })
}
