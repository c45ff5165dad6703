use std::cell::Cell;

use mmdm_core::diffusion::{sample_loop, DiffusionSchedule, Sampler, ScheduleKind};
use mmdm_core::masking::{build_mask, MaskPattern, MaskingConfig};
use mmdm_core::motion::repr::{pack_joint_level, synth_bundle};
use mmdm_core::motion::{synth_motion, SegmentSplit, SynthKind};
use mmdm_core::network::NetworkConfig;
use mmdm_core::pipeline::complete::complete_window;
use mmdm_core::pipeline::{
    complete_motion, inbetween_motion, interpolate_transition, refine_motion, sample_transition, CompletionModel,
    DiffusionSpec, ImputationConfig, InbetweenSystem, ModelKind, Objective, PoseNormalizer, Result, TokenNormalizer,
    TransitionModel,
};
use mmdm_core::rng;
use mmdm_core::MotionSequence;
use rand::Rng;

const KINDS: [SynthKind; 3] = [SynthKind::SinusoidLimb, SynthKind::LinearWalk, SynthKind::FigureEight];

fn spec(steps: usize) -> DiffusionSpec {
    DiffusionSpec {
        steps,
        schedule: ScheduleKind::ScaledLinear,
        tail: 1e-2,
        noisy_start: false,
    }
}

fn pose_model(kind: ModelKind, joints: usize, seed: u64) -> CompletionModel {
    let data: Vec<_> = (0..3).map(|i| synth_motion(KINDS[i], 8, joints, seed + i as u64).unwrap()).collect();
    let mut cfg = NetworkConfig::tiny(8, 1, 3);
    cfg.init_seed = seed;
    let mut diffusion = spec(4);
    if kind == ModelKind::Refinement {
        diffusion.noisy_start = true;
        diffusion.tail = 0.98;
    }
    CompletionModel::new(kind, cfg, PoseNormalizer::fit(&data).unwrap(), Objective::Signal, diffusion).unwrap()
}

fn token_system(seed: u64) -> (InbetweenSystem, ImputationConfig) {
    let data: Vec<MotionSequence> = (0..3)
        .map(|i| pack_joint_level(&synth_bundle(KINDS[i], 12, seed + i as u64).unwrap().0).unwrap().to_motion().unwrap())
        .collect();
    let imput = ImputationConfig::default();
    let norm = TokenNormalizer::fit(&data, imput.emphasis(264)).unwrap();
    let mut cfg = NetworkConfig::tiny(8, 1, 12);
    cfg.init_seed = seed;
    (InbetweenSystem::new(cfg, norm, Objective::Signal, spec(3)).unwrap(), imput)
}

#[test]
fn completion_keeps_observed_cells_bit_exact() {
    let mut r = rng::seeded(1);
    for case in 0..50u64 {
        let joints = [5, 9, 17][case as usize % 3];
        let frames = r.random_range(3..14);
        let seq_len = if case % 4 == 0 { frames } else { r.random_range(2..=frames) };
        let model = pose_model(ModelKind::Completion, joints, case);
        let gt = synth_motion(KINDS[case as usize % 3], frames, joints, 100 + case).unwrap();
        let pattern = [MaskPattern::PoseLevel, MaskPattern::JointLevel][case as usize % 2];
        let ratio = r.random_range(0.1..0.9);
        let mask = build_mask(&MaskingConfig::new(pattern, ratio, case), frames, joints, None).unwrap();
        let mut input = gt.clone();
        input.set_mask(mask.clone()).unwrap();
        let sampler = if case % 2 == 0 { Sampler::Ddpm } else { Sampler::Ddim(2) };
        let out = complete_motion(&model, &input, sampler, seq_len, case).unwrap().output;
        for t in 0..frames {
            for j in 0..joints {
                if !mask[t * joints + j] {
                    let (a, b) = (out.cell(t, j), gt.cell(t, j));
                    assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()), "case {case} t {t} j {j}");
                }
            }
        }
        assert!(out.values().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn exact_oracle_completion_recovers_truth() {
    let sched = DiffusionSchedule::new(20, ScheduleKind::ScaledLinear, 1e-2).unwrap();
    let norm = PoseNormalizer { scale: 0.4 };
    for (i, sampler) in [Sampler::Ddpm, Sampler::Ddim(1), Sampler::Ddim(7)].into_iter().enumerate() {
        let gt = synth_motion(SynthKind::FigureEight, 10, 17, 3 + i as u64).unwrap();
        let mask = build_mask(&MaskingConfig::new(MaskPattern::JointLevel, 0.6, i as u64), 10, 17, None).unwrap();
        let mut input = gt.clone();
        input.set_mask(mask.clone()).unwrap();
        let (cond, centroids) = norm.to_model(&input).unwrap();
        // the truth in the same normalized frame as the observation
        let truth: Vec<f64> = gt
            .values()
            .chunks(3)
            .enumerate()
            .flat_map(|(c, p)| {
                let o = centroids[c / 17];
                [(p[0] - o[0]) / 0.4, (p[1] - o[1]) / 0.4, (p[2] - o[2]) / 0.4]
            })
            .collect();
        let mut r = rng::seeded(9);
        let start = rng::normal_vec(&mut r, cond.len());
        let y = complete_window(&sched, sampler, &cond, &mask, start, &mut r, |_, _| Ok(truth.clone())).unwrap();
        let out = norm.from_model(&input, &y, &centroids).unwrap();
        for (a, b) in out.values().iter().zip(gt.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn refinement_with_exact_oracle_returns_clean_motion() {
    let sched = DiffusionSchedule::noisy_start(50, 0.98).unwrap();
    let clean = synth_motion(SynthKind::LinearWalk, 10, 17, 5).unwrap();
    let noisy: Vec<f64> = {
        let mut r = rng::seeded(2);
        clean.values().iter().map(|v| v + 0.02 * rng::normal(&mut r)).collect()
    };
    for sampler in [Sampler::Ddpm, Sampler::Ddim(1), Sampler::Ddim(10)] {
        let shrink = sched.alpha_bar(50).sqrt();
        let start: Vec<f64> = noisy.iter().map(|v| shrink * v).collect();
        let mut r = rng::seeded(3);
        let out = sample_loop(&sched, sampler, start, &mut r, |_, _| Ok(clean.values().to_vec()), |_, _| Ok(())).unwrap();
        for (a, b) in out.iter().zip(clean.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn refinement_keeps_shape_and_is_seeded() {
    let model = pose_model(ModelKind::Refinement, 17, 4);
    let m = synth_motion(SynthKind::SinusoidLimb, 12, 17, 8).unwrap();
    let a = refine_motion(&model, &m, Sampler::Ddim(1), 8, 1).unwrap();
    let b = refine_motion(&model, &m, Sampler::Ddim(1), 8, 1).unwrap();
    assert_eq!(a.shape(), m.shape());
    assert_eq!(a, b);
    assert!(complete_motion(&model, &m, Sampler::Ddpm, 8, 1).is_err());
}

#[test]
fn inbetweening_keeps_boundaries_bit_exact() {
    let mut r = rng::seeded(2);
    let (sys, base) = token_system(7);
    for case in 0..50u64 {
        let pre = r.random_range(1..5);
        let tr = r.random_range(1..6);
        let post = r.random_range(1..5);
        let split = SegmentSplit::new(pre, tr, post, pre + tr + post).unwrap();
        let (bundle, _) = synth_bundle(KINDS[case as usize % 3], split.total(), 50 + case).unwrap();
        let input = pack_joint_level(&bundle).unwrap().to_motion().unwrap();
        let imput = ImputationConfig {
            guidance_scale: if case % 3 == 0 { 0.0 } else { 0.05 },
            ..base.clone()
        };
        let sampler = if case % 2 == 0 { Sampler::Ddpm } else { Sampler::Ddim(2) };
        let out = inbetween_motion(&sys, &input, &split, &imput, sampler, case).unwrap().output;
        let frame = 264;
        for t in (0..split.total()).filter(|&t| split.is_boundary(t)) {
            let (a, b) = (&out.values()[t * frame..(t + 1) * frame], &input.values()[t * frame..(t + 1) * frame]);
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()), "case {case} frame {t}");
        }
        assert!(out.values().iter().all(|v| v.is_finite()));
    }
}

/// Returns a fixed signal; counts gradient requests.
struct Oracle {
    truth: Vec<f64>,
    grads: Cell<usize>,
}

impl TransitionModel for Oracle {
    fn predict(&self, _x: &[f64], _k: usize) -> Result<Vec<f64>> {
        Ok(self.truth.clone())
    }

    fn boundary_grad(&self, x: &[f64], _k: usize) -> Result<Vec<f64>> {
        self.grads.set(self.grads.get() + 1);
        Ok(vec![1.0; x.len()])
    }
}

fn known_and_truth(split: &SegmentSplit) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng::seeded(4);
    let truth = rng::normal_vec(&mut r, split.total() * 264);
    let mut known = truth.clone();
    for t in split.transition_range() {
        known[t * 264..(t + 1) * 264].iter_mut().for_each(|v| *v = 0.0);
    }
    (known, truth)
}

#[test]
fn zero_guidance_is_a_no_op() {
    let split = SegmentSplit::new(2, 3, 2, 7).unwrap();
    let (known, truth) = known_and_truth(&split);
    let sched = DiffusionSchedule::new(10, ScheduleKind::Cosine, 1e-2).unwrap();
    let oracle = Oracle {
        truth,
        grads: Cell::new(0),
    };
    for sampler in [Sampler::Ddpm, Sampler::Ddim(3)] {
        let a = sample_transition(&oracle, &sched, sampler, &known, &split, 0.0, &mut rng::seeded(5)).unwrap();
        assert_eq!(oracle.grads.get(), 0);
        let b = sample_transition(&oracle, &sched, sampler, &known, &split, 0.0, &mut rng::seeded(5)).unwrap();
        assert_eq!(a, b);
        let guided = sample_transition(&oracle, &sched, sampler, &known, &split, 0.1, &mut rng::seeded(5)).unwrap();
        assert!(oracle.grads.get() > 0);
        assert_ne!(a, guided);
        oracle.grads.set(0);
    }
}

#[test]
fn exact_oracle_inbetweening_recovers_truth() {
    let split = SegmentSplit::new(3, 4, 2, 9).unwrap();
    let (known, truth) = known_and_truth(&split);
    let sched = DiffusionSchedule::new(25, ScheduleKind::ScaledLinear, 1e-2).unwrap();
    let oracle = Oracle {
        truth: truth.clone(),
        grads: Cell::new(0),
    };
    for sampler in [Sampler::Ddpm, Sampler::Ddim(1), Sampler::Ddim(6)] {
        let out = sample_transition(&oracle, &sched, sampler, &known, &split, 0.0, &mut rng::seeded(6)).unwrap();
        for (a, b) in out.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn interpolation_baseline_endpoints() {
    let split = SegmentSplit::new(1, 3, 1, 5).unwrap();
    let v: Vec<f64> = (0..5 * 264).map(|i| if i < 264 { 0.0 } else { 4.0 }).collect();
    let out = interpolate_transition(&v, &split);
    for (t, expect) in [(1, 1.0), (2, 2.0), (3, 3.0)] {
        assert!(out[t * 264..(t + 1) * 264].iter().all(|x| (x - expect).abs() < 1e-12));
    }
    assert_eq!(&out[..264], &v[..264]);
}
