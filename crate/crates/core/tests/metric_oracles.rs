use mmdm_core::metrics::{
    accel_error, l2p, l2q, mpjpe, mpjpe_on, npss, pcp, power_spectrum, precision_recall, PR_THRESHOLD_M,
};
use mmdm_core::motion::{synth_motion, Skeleton, SynthKind};
use mmdm_core::rng;
use mmdm_core::MotionSequence;
use proptest::prelude::*;

fn dft_power(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (1..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            re * re + im * im
        })
        .collect()
}

fn npss_direct(pred: &MotionSequence, gt: &MotionSequence) -> f64 {
    let (frames, channels) = (gt.frames(), gt.joints() * gt.dim());
    let col = |m: &MotionSequence, c: usize| (0..frames).map(|t| m.values()[t * channels + c]).collect::<Vec<_>>();
    let cdf = |p: &[f64]| {
        let s: f64 = p.iter().sum();
        let mut acc = 0.0;
        p.iter()
            .map(|v| {
                if s > 0.0 {
                    acc += v / s;
                }
                acc
            })
            .collect::<Vec<_>>()
    };
    let (mut num, mut den) = (0.0, 0.0);
    for c in 0..channels {
        let (pg, pp) = (dft_power(&col(gt, c)), dft_power(&col(pred, c)));
        let d: f64 = cdf(&pg).iter().zip(cdf(&pp)).map(|(a, b)| (a - b).abs()).sum();
        let w: f64 = pg.iter().sum();
        num += w * d;
        den += w;
    }
    num / den
}

fn noisy(m: &MotionSequence, sd: f64, seed: u64) -> MotionSequence {
    let mut r = rng::seeded(seed);
    m.with_values(m.values().iter().map(|v| v + sd * rng::normal(&mut r)).collect())
        .unwrap()
}

#[test]
fn power_spectrum_matches_direct_dft() {
    for n in [2, 5, 16, 31] {
        let x: Vec<f64> = (0..n).map(|t| (0.7 * t as f64).sin() + 0.1 * t as f64).collect();
        let (a, b) = (power_spectrum(&x), dft_power(&x));
        assert_eq!(a.len(), n / 2);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-9 * (1.0 + q.abs()));
        }
    }
}

#[test]
fn npss_matches_direct_oracle() {
    for (kind, frames) in [(SynthKind::SinusoidLimb, 20), (SynthKind::FigureEight, 33)] {
        let gt = synth_motion(kind, frames, 17, 3).unwrap();
        let pred = noisy(&gt, 0.05, 8);
        let got = npss(&pred, &gt).unwrap();
        assert!((got - npss_direct(&pred, &gt)).abs() < 1e-9);
        assert!(got > 0.0);
    }
}

#[test]
fn threshold_is_strict() {
    let gt = [[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]];
    let on_edge = [Some([PR_THRESHOLD_M, 0.0, 0.0]), Some([1.0, 1.0, -PR_THRESHOLD_M])];
    assert_eq!(precision_recall(&on_edge, &gt, PR_THRESHOLD_M).unwrap(), (0.0, 0.0));
    let inside = [Some([0.19999, 0.0, 0.0]), None];
    assert_eq!(precision_recall(&inside, &gt, PR_THRESHOLD_M).unwrap(), (100.0, 50.0));
    assert_eq!(precision_recall(&[None, None], &gt, PR_THRESHOLD_M).unwrap(), (0.0, 0.0));
}

#[test]
fn pcp_half_limb_is_strict() {
    let sk = Skeleton {
        parents: vec![None, Some(0)],
        lr_pairs: vec![],
        limbs: vec![(0, 1)],
        mid_hip: 0,
    };
    let gt = MotionSequence::new(1, 2, 3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    let edge = MotionSequence::new(1, 2, 3, vec![0.0, 0.0, 0.0, 1.5, 0.0, 0.0]).unwrap();
    let inside = MotionSequence::new(1, 2, 3, vec![0.0, 0.0, 0.0, 1.4999, 0.0, 0.0]).unwrap();
    assert_eq!(pcp(&edge, &gt, &sk).unwrap(), 0.0);
    assert_eq!(pcp(&inside, &gt, &sk).unwrap(), 100.0);
}

#[test]
fn accel_closed_form() {
    // pred = gt + c t^2 along x: second differences differ by exactly 2c
    let gt = synth_motion(SynthKind::LinearWalk, 12, 17, 2).unwrap();
    let c = 0.25;
    let v: Vec<f64> = gt
        .values()
        .chunks(3)
        .enumerate()
        .flat_map(|(i, p)| {
            let t = (i / 17) as f64;
            [p[0] + c * t * t, p[1], p[2]]
        })
        .collect();
    let pred = gt.with_values(v).unwrap();
    assert!((accel_error(&pred, &gt).unwrap() - 2.0 * c * 1000.0).abs() < 1e-9);
    let quad = MotionSequence::new(3, 1, 3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 4.0, 0.0, 0.0]).unwrap();
    let zero = MotionSequence::new(3, 1, 3, vec![0.0; 9]).unwrap();
    assert_eq!(accel_error(&quad, &zero).unwrap(), 2000.0);
}

#[test]
fn identical_inputs() {
    let gt = synth_motion(SynthKind::FigureEight, 16, 17, 4).unwrap();
    assert_eq!(mpjpe(&gt, &gt).unwrap(), 0.0);
    assert_eq!(accel_error(&gt, &gt).unwrap(), 0.0);
    assert_eq!(l2p(&gt, &gt).unwrap(), 0.0);
    assert_eq!(npss(&gt, &gt).unwrap(), 0.0);
    assert_eq!(pcp(&gt, &gt, &Skeleton::h36m17()).unwrap(), 100.0);
    let pts: Vec<[f64; 3]> = gt.values().chunks(3).map(|p| [p[0], p[1], p[2]]).collect();
    let est: Vec<Option<[f64; 3]>> = pts.iter().copied().map(Some).collect();
    assert_eq!(precision_recall(&est, &pts, PR_THRESHOLD_M).unwrap(), (100.0, 100.0));
    let q = MotionSequence::new(2, 2, 4, vec![1.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.0, 1.0, 0.0, 0.0, 0.6, 0.0, 0.8, 0.0]).unwrap();
    let neg = q.with_values(q.values().iter().map(|v| -v).collect()).unwrap();
    assert_eq!(l2q(&q, &q).unwrap(), 0.0);
    assert_eq!(l2q(&neg, &q).unwrap(), 0.0);
}

#[test]
fn l2q_rejects_non_unit() {
    let q = MotionSequence::new(1, 1, 4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let bad = MotionSequence::new(1, 1, 4, vec![1.1, 0.0, 0.0, 0.0]).unwrap();
    assert!(l2q(&bad, &q).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mpjpe_matches_loop(frames in 1usize..10, joints in 1usize..20, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let gt = MotionSequence::new(frames, joints, 3, rng::normal_vec(&mut r, frames * joints * 3)).unwrap();
        let pred = noisy(&gt, 0.1, seed ^ 1);
        let mut total = 0.0;
        for t in 0..frames {
            for j in 0..joints {
                let (a, b) = (pred.cell(t, j), gt.cell(t, j));
                total += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            }
        }
        let expect = 1000.0 * total / (frames * joints) as f64;
        prop_assert!((mpjpe(&pred, &gt).unwrap() - expect).abs() < 1e-9);
        let all = vec![true; frames * joints];
        prop_assert!((mpjpe_on(&pred, &gt, &all).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn metrics_non_negative(seed in any::<u64>(), sd in 0.0f64..0.5) {
        let gt = synth_motion(SynthKind::SinusoidLimb, 12, 17, seed % 50).unwrap();
        let pred = noisy(&gt, sd, seed);
        prop_assert!(mpjpe(&pred, &gt).unwrap() >= 0.0);
        prop_assert!(accel_error(&pred, &gt).unwrap() >= 0.0);
        let n = npss(&pred, &gt).unwrap();
        prop_assert!(n >= 0.0);
        let p = pcp(&pred, &gt, &Skeleton::h36m17()).unwrap();
        prop_assert!((0.0..=100.0).contains(&p));
    }
}
