use mmdm_core::masking::{adaptive_weight, build_mask, MaskPattern, MaskingConfig, QualitySignals};
use proptest::prelude::*;

fn signals(frames: usize, joints: usize, rho: Vec<f64>, sigma: Vec<f64>) -> QualitySignals {
    QualitySignals::new(rho.len() / (frames * joints), frames, joints, rho, sigma).unwrap()
}

/// Inclusion probabilities of drawing `k` items one at a time, each draw
/// proportional to the weights of the items still left.
fn inclusion(weights: &[f64], k: usize) -> Vec<f64> {
    fn go(w: &[f64], taken: &mut Vec<bool>, k: usize, p: f64, out: &mut [f64]) {
        if k == 0 {
            return;
        }
        let total: f64 = w.iter().zip(taken.iter()).filter(|(_, t)| !**t).map(|(w, _)| w).sum();
        for c in 0..w.len() {
            if taken[c] {
                continue;
            }
            let q = p * w[c] / total;
            out[c] += q;
            taken[c] = true;
            go(w, taken, k - 1, q, out);
            taken[c] = false;
        }
    }
    let mut out = vec![0.0; weights.len()];
    go(weights, &mut vec![false; weights.len()], k, 1.0, &mut out);
    out
}

fn frequencies(cfg: &MaskingConfig, s: &QualitySignals, seeds: u64) -> Vec<f64> {
    let mut hits = vec![0usize; s.frames * s.joints];
    for seed in 0..seeds {
        let c = MaskingConfig { seed, ..cfg.clone() };
        for (h, m) in hits.iter_mut().zip(build_mask(&c, s.frames, s.joints, Some(s)).unwrap()) {
            *h += m as usize;
        }
    }
    hits.iter().map(|&h| h as f64 / seeds as f64).collect()
}

fn small_grid() -> QualitySignals {
    // two views, 2 x 3 cells; weights spread from about 0.2 to 1.8
    let rho = vec![0.9, 0.1, 0.6, 0.0, 0.8, 0.3, 0.9, 0.0, 0.5, 0.1, 0.9, 0.7];
    let sigma = vec![0.05, 0.8, 0.2, 0.9, 0.0, 0.4];
    signals(2, 3, rho, sigma)
}

#[test]
fn weighted_single_draw_matches_weights() {
    let s = small_grid();
    let cfg = MaskingConfig::new(MaskPattern::Weighted, 0.17, 0);
    assert_eq!(cfg.target_count(2, 3), 1);
    let w = s.weights(cfg.omega);
    let total: f64 = w.iter().sum();
    let freq = frequencies(&cfg, &s, 10_000);
    for (f, w) in freq.iter().zip(&w) {
        assert!((f - w / total).abs() <= 0.01, "{f} vs {}", w / total);
    }
}

#[test]
fn weighted_marginals_match_sequential_oracle() {
    let s = small_grid();
    let cfg = MaskingConfig::new(MaskPattern::Weighted, 0.34, 0);
    assert_eq!(cfg.target_count(2, 3), 2);
    let w = s.weights(cfg.omega);
    let expect = inclusion(&w, 2);
    assert!((expect.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    let freq = frequencies(&cfg, &s, 10_000);
    for (f, e) in freq.iter().zip(&expect) {
        assert!((f - e).abs() <= 0.01, "{f} vs {e}");
    }
    // heavier cells are masked more often
    for a in 0..w.len() {
        for b in 0..w.len() {
            if w[a] > w[b] + 0.1 {
                assert!(freq[a] > freq[b], "cell {a} (w {}) vs {b} (w {})", w[a], w[b]);
            }
        }
    }
}

#[test]
fn weight_formula() {
    assert_eq!(adaptive_weight(&[0.0, 0.0], 0.0, 1.0), 1.0);
    assert_eq!(adaptive_weight(&[0.5, 0.5], 0.25, 2.0), 2.0 * (-1.0f64).exp() + 0.25);
    let s = small_grid();
    assert_eq!(s.weights(1.0)[4], adaptive_weight(&[0.8, 0.9], 0.0, 1.0));
}

#[test]
fn weighted_requires_signals() {
    let cfg = MaskingConfig::new(MaskPattern::Weighted, 0.5, 0);
    assert!(build_mask(&cfg, 4, 5, None).is_err());
}

#[test]
fn ratio_bounds_rejected() {
    for r in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(build_mask(&MaskingConfig::new(MaskPattern::JointLevel, r, 0), 4, 5, None).is_err());
    }
}

fn pattern() -> impl Strategy<Value = MaskPattern> {
    prop_oneof![
        Just(MaskPattern::PoseLevel),
        Just(MaskPattern::JointLevel),
        Just(MaskPattern::Weighted)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pose_level_counts(frames in 1usize..12, joints in 1usize..20, ratio in 0.01f64..0.99, seed in any::<u64>()) {
        let cfg = MaskingConfig::new(MaskPattern::PoseLevel, ratio, seed);
        let m = build_mask(&cfg, frames, joints, None).unwrap();
        let k = (ratio * joints as f64).floor() as usize;
        for t in 0..frames {
            prop_assert_eq!(m[t * joints..(t + 1) * joints].iter().filter(|x| **x).count(), k);
        }
    }

    #[test]
    fn joint_level_counts(frames in 1usize..12, joints in 1usize..20, ratio in 0.01f64..0.99, seed in any::<u64>()) {
        let cfg = MaskingConfig::new(MaskPattern::JointLevel, ratio, seed);
        let m = build_mask(&cfg, frames, joints, None).unwrap();
        let k = (ratio * (frames * joints) as f64).floor() as usize;
        prop_assert_eq!(m.iter().filter(|x| **x).count(), k);
    }

    #[test]
    fn weighted_counts_and_forced_cells(
        frames in 1usize..8,
        joints in 1usize..10,
        views in 1usize..4,
        ratio in 0.01f64..0.99,
        seed in any::<u64>(),
        raw in proptest::collection::vec(0.0f64..1.0, 4 * 8 * 10),
    ) {
        let cells = frames * joints;
        // about a fifth of the columns are invisible in every view
        let rho: Vec<f64> = (0..views * cells)
            .map(|i| if raw[i % cells] < 0.2 { 0.0 } else { raw[i] })
            .collect();
        let sigma = raw[..cells].to_vec();
        let s = signals(frames, joints, rho, sigma);
        let cfg = MaskingConfig::new(MaskPattern::Weighted, ratio, seed);
        let m = build_mask(&cfg, frames, joints, Some(&s)).unwrap();
        let invisible = (0..cells).filter(|&c| s.invisible(c / joints, c % joints)).count();
        let k = (ratio * cells as f64).floor() as usize;
        prop_assert_eq!(m.iter().filter(|x| **x).count(), k.max(invisible));
        for c in 0..cells {
            if s.invisible(c / joints, c % joints) {
                prop_assert!(m[c]);
            }
        }
    }

    #[test]
    fn same_seed_same_mask(p in pattern(), ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let s = signals(6, 5, vec![0.5; 2 * 30], vec![0.1; 30]);
        let cfg = MaskingConfig::new(p, ratio, seed);
        prop_assert_eq!(build_mask(&cfg, 6, 5, Some(&s)).unwrap(), build_mask(&cfg, 6, 5, Some(&s)).unwrap());
    }
}
