//! Motion completion and refinement.

use mmdm_tensor::Tensor;

use super::config::{ModelKind, SamplerKind, TaskConfig};
use super::data::completion_dataset;
use super::models::CompletionModel;
use super::{load_model_checkpoint, PipelineError, Result};
use crate::diffusion::{restore_unmasked, sample_loop, DiffusionSchedule, Sampler};
use crate::masking::build_mask;
use crate::metrics::{accel_error, mpjpe, mpjpe_on, pcp, MetricReport};
use crate::motion::{load_motion, MotionSequence, Skeleton};
use crate::rng::{self, derive_seed};

pub fn sampler_of(cfg: &TaskConfig) -> Sampler {
    match cfg.diffusion.sampler {
        SamplerKind::Ddpm => Sampler::Ddpm,
        SamplerKind::Ddim => Sampler::Ddim(cfg.diffusion.ddim_stride),
    }
}

/// Reverse chain over one window in model space from `x_start`, restoring
/// the unmasked cells of `cond` after every step.
pub fn complete_window<P>(
    sched: &DiffusionSchedule,
    sampler: Sampler,
    cond: &[f64],
    mask: &[bool],
    x_start: Vec<f64>,
    r: &mut rng::Rng,
    predict: P,
) -> Result<Vec<f64>>
where
    P: FnMut(&[f64], usize) -> crate::diffusion::Result<Vec<f64>>,
{
    if !mask.iter().any(|&m| m) {
        return Ok(cond.to_vec());
    }
    let dim = cond.len() / mask.len();
    let mut x_start = x_start;
    restore_unmasked(&mut x_start, cond, mask, dim)?;
    Ok(sample_loop(sched, sampler, x_start, r, predict, |x, _| {
        restore_unmasked(x, cond, mask, dim)
    })?)
}

/// Window starts covering `frames` with windows of `len` and stride `len / 2`;
/// the last window ends at the final frame.
pub fn window_starts(frames: usize, len: usize) -> Vec<usize> {
    if frames <= len {
        return vec![0];
    }
    let stride = (len / 2).max(1);
    let mut starts: Vec<usize> = (0..=frames - len).step_by(stride).collect();
    if *starts.last().expect("non-empty") != frames - len {
        starts.push(frames - len);
    }
    starts
}

/// Runs `window` over sliding windows and cross-fades the results linearly
/// in each overlap.
pub fn sliding<F>(m: &MotionSequence, len: usize, mut window: F) -> Result<MotionSequence>
where
    F: FnMut(usize, &MotionSequence) -> Result<MotionSequence>,
{
    let starts = window_starts(m.frames(), len);
    if starts.len() == 1 {
        return window(0, m);
    }
    let frame_len = m.joints() * m.dim();
    let mut acc = vec![0.0; m.values().len()];
    let mut weight = vec![0.0; m.frames()];
    for (i, &s) in starts.iter().enumerate() {
        let out = window(i, &m.frame_range(s, len)?)?;
        for f in 0..len {
            let w = (f + 1).min(len - f) as f64;
            weight[s + f] += w;
            let o = (s + f) * frame_len;
            for (a, v) in acc[o..o + frame_len].iter_mut().zip(&out.values()[f * frame_len..(f + 1) * frame_len]) {
                *a += w * v;
            }
        }
    }
    for (f, w) in weight.iter().enumerate() {
        acc[f * frame_len..(f + 1) * frame_len].iter_mut().for_each(|a| *a /= w);
    }
    Ok(m.with_values(acc)?)
}

/// Copies the unmasked cells of `input` into `out` bit for bit.
fn keep_unmasked(out: &mut MotionSequence, input: &MotionSequence) {
    let d = input.dim();
    for t in 0..input.frames() {
        for j in 0..input.joints() {
            if !input.is_masked(t, j) {
                out.cell_mut(t, j)[..d].copy_from_slice(input.cell(t, j));
            }
        }
    }
}

/// Completed motion and the Gaussian starting point mapped back to motion
/// space.
pub struct Completion {
    pub output: MotionSequence,
    pub initial: MotionSequence,
}

/// Completes the masked cells of `input` (its mask marks the cells to
/// generate). Unmasked cells of the result equal the input exactly.
pub fn complete_motion(model: &CompletionModel, input: &MotionSequence, sampler: Sampler, seq_len: usize, seed: u64) -> Result<Completion> {
    if model.kind == ModelKind::Refinement {
        return Err(PipelineError::Config("a refinement model cannot complete masked cells".into()));
    }
    let sched = model.diffusion.build()?;
    let mut inits = Vec::new();
    let mut out = sliding(input, seq_len, |i, w| {
        let mut r = rng::seeded(derive_seed(seed, i as u64));
        let (cond, centroids) = model.norm.to_model(w)?;
        let x_start = rng::normal_vec(&mut r, cond.len());
        inits.push(model.norm.from_model(w, &x_start, &centroids)?);
        let shape = vec![w.frames(), w.joints(), 3];
        let cond_t = Tensor::new(shape, cond.clone())?;
        let y = if model.kind == ModelKind::Mae {
            let mut y = model.predict_x0(&sched, &cond_t, &cond, w.mask(), 0)?;
            restore_unmasked(&mut y, &cond, w.mask(), 3)?;
            y
        } else {
            complete_window(&sched, sampler, &cond, w.mask(), x_start, &mut r, |x, k| {
                model
                    .predict_x0(&sched, &cond_t, x, w.mask(), k)
                    .map_err(|e| crate::diffusion::DiffusionError::Model(e.to_string()))
            })?
        };
        model.norm.from_model(w, &y, &centroids)
    })?;
    keep_unmasked(&mut out, input);
    let mut initial = sliding(input, seq_len, |i, _| Ok(inits[i].clone()))?;
    keep_unmasked(&mut initial, input);
    Ok(Completion { output: out, initial })
}

/// Starts the reverse chain from the (noisy) input, scaled by
/// `sqrt(alpha_bar_K)` as the forward process would, and updates every cell.
pub fn refine_motion(model: &CompletionModel, input: &MotionSequence, sampler: Sampler, seq_len: usize, seed: u64) -> Result<MotionSequence> {
    if model.kind != ModelKind::Refinement {
        return Err(PipelineError::Config("refinement needs a model trained with the full loss".into()));
    }
    let sched = model.diffusion.build()?;
    let mut clean = input.clone();
    clean.set_mask(vec![false; input.frames() * input.joints()])?;
    let mut out = sliding(&clean, seq_len, |i, w| {
        let mut r = rng::seeded(derive_seed(seed, i as u64));
        let (x, centroids) = model.norm.to_model(w)?;
        let shrink = sched.alpha_bar(sched.steps()).sqrt();
        let x: Vec<f64> = x.iter().map(|v| shrink * v).collect();
        let shape = vec![w.frames(), w.joints(), 3];
        let cond_t = Tensor::new(shape, x.clone())?;
        let none = vec![false; w.frames() * w.joints()];
        let y = sample_loop(&sched, sampler, x, &mut r, |xk, k| {
            model
                .predict_x0(&sched, &cond_t, xk, &none, k)
                .map_err(|e| crate::diffusion::DiffusionError::Model(e.to_string()))
        }, |_, _| Ok(()))?;
        model.norm.from_model(w, &y, &centroids)
    })?;
    out.set_mask(input.mask().to_vec())?;
    Ok(out)
}

fn pcp_or_skip(report: &mut MetricReport, name: &str, pred: &MotionSequence, gt: &MotionSequence) -> Result<()> {
    if let Ok(v) = pcp(pred, gt, &Skeleton::for_joints(gt.joints())) {
        report.set(name, v)?;
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Inputs for completion: the configured file (its mask selects the cells)
/// or the synthetic set masked by `masking.inference`. Returns
/// `(masked input, ground truth)` pairs.
fn completion_inputs(cfg: &TaskConfig) -> Result<Vec<(MotionSequence, MotionSequence)>> {
    if let Some(path) = &cfg.data.input {
        let input = load_motion(path)?;
        let gt = match &cfg.data.ground_truth {
            Some(p) => load_motion(p)?,
            None => input.clone(),
        };
        input.check_same_shape(&gt)?;
        return Ok(vec![(input, gt)]);
    }
    let data = completion_dataset(cfg)?;
    data.into_iter()
        .enumerate()
        .map(|(i, s)| {
            let mc = cfg.masking.inference.with_seed(derive_seed(cfg.seed, 0x3a5c + i as u64));
            let mask = build_mask(&mc, s.motion.frames(), s.motion.joints(), Some(&s.signals))?;
            let mut input = s.motion.clone();
            input.set_mask(mask)?;
            Ok((input, s.motion))
        })
        .collect()
}

pub struct TaskOutput {
    pub outputs: Vec<MotionSequence>,
    pub report: MetricReport,
}

pub fn run_completion(cfg: &TaskConfig, model: &CompletionModel) -> Result<TaskOutput> {
    let pairs = completion_inputs(cfg)?;
    let sampler = sampler_of(cfg);
    let mut report = MetricReport::new(Some(cfg.seed), Some(super::config_hash(cfg)));
    let (mut all, mut masked, mut gauss, mut acc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut outputs = Vec::with_capacity(pairs.len());
    let mut masked_cells = 0;
    for (i, (input, gt)) in pairs.iter().enumerate() {
        let c = complete_motion(model, input, sampler, cfg.seq_len, derive_seed(cfg.seed, 0xc0 + i as u64))?;
        all.push(mpjpe(&c.output, gt)?);
        if input.masked_count() > 0 {
            masked.push(mpjpe_on(&c.output, gt, input.mask())?);
            gauss.push(mpjpe_on(&c.initial, gt, input.mask())?);
        }
        if gt.frames() >= 3 {
            acc.push(accel_error(&c.output, gt)?);
        }
        masked_cells += input.masked_count();
        outputs.push(c.output);
    }
    report.set("mpjpe", mean(&all))?;
    if !masked.is_empty() {
        report.set("mpjpe.masked", mean(&masked))?;
        report.set("mpjpe.gaussian", mean(&gauss))?;
    }
    if !acc.is_empty() {
        report.set("accel", mean(&acc))?;
    }
    let pcps: Vec<f64> = outputs
        .iter()
        .zip(&pairs)
        .filter_map(|(o, (_, gt))| pcp(o, gt, &Skeleton::for_joints(gt.joints())).ok())
        .collect();
    if pcps.len() == outputs.len() {
        report.set("pcp", mean(&pcps))?;
    }
    report.set("masked_cells", masked_cells as f64)?;
    Ok(TaskOutput { outputs, report })
}

/// Inputs for refinement: the configured file, or the synthetic set with
/// Gaussian noise of `data.noise_m` meters.
fn refinement_inputs(cfg: &TaskConfig) -> Result<Vec<(MotionSequence, MotionSequence)>> {
    if let Some(path) = &cfg.data.input {
        let input = load_motion(path)?;
        let gt = match &cfg.data.ground_truth {
            Some(p) => load_motion(p)?,
            None => input.clone(),
        };
        input.check_same_shape(&gt)?;
        return Ok(vec![(input, gt)]);
    }
    Ok(completion_dataset(cfg)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = rng::seeded(derive_seed(cfg.seed, 0x7e + i as u64));
            let noisy: Vec<f64> = s.motion.values().iter().map(|v| v + cfg.data.noise_m * rng::normal(&mut r)).collect();
            (s.motion.with_values(noisy).expect("same length"), s.motion)
        })
        .collect())
}

pub fn run_refinement(cfg: &TaskConfig, model: &CompletionModel) -> Result<TaskOutput> {
    let pairs = refinement_inputs(cfg)?;
    let sampler = sampler_of(cfg);
    let mut report = MetricReport::new(Some(cfg.seed), Some(super::config_hash(cfg)));
    let (mut before, mut after) = (Vec::new(), Vec::new());
    let mut outputs = Vec::with_capacity(pairs.len());
    for (i, (input, gt)) in pairs.iter().enumerate() {
        let out = refine_motion(model, input, sampler, cfg.seq_len, derive_seed(cfg.seed, 0xf0 + i as u64))?;
        before.push(mpjpe(input, gt)?);
        after.push(mpjpe(&out, gt)?);
        outputs.push(out);
    }
    let (b, a) = (mean(&before), mean(&after));
    report.set("mpjpe.before", b)?;
    report.set("mpjpe.after", a)?;
    if b > 0.0 {
        report.set("delta.mpjpe", 100.0 * (a - b).abs() / b)?;
    }
    if let [(input, gt)] = pairs.as_slice() {
        pcp_or_skip(&mut report, "pcp.before", input, gt)?;
        pcp_or_skip(&mut report, "pcp.after", &outputs[0], gt)?;
    }
    Ok(TaskOutput { outputs, report })
}

/// Loads a pose model from `cfg.checkpoint`.
pub fn load_pose_model(cfg: &TaskConfig) -> Result<CompletionModel> {
    CompletionModel::from_checkpoint(load_model_checkpoint(cfg)?)
}
