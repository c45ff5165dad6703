use mmdm_core::network::{AggregationOrder, CascadedEncoder, Mmdm, NetworkConfig, Session};
use mmdm_tensor::Tensor;
use proptest::prelude::*;

fn kaa_entries(frames: usize, joints: usize, depth: usize, order: AggregationOrder) -> (usize, usize) {
    let mut cfg = NetworkConfig::tiny(8, depth, 3);
    cfg.order = order;
    let m = Mmdm::new(cfg).unwrap();
    let x = Tensor::from_fn(&[frames, joints, 3], |i| (i as f64 * 0.37).sin());
    let mut s = Session::frozen(&m.params);
    m.encode(&mut s, &x, &vec![false; frames * joints], 1).unwrap();
    (s.stats.entries_for("structural"), s.stats.entries_for("temporal"))
}

fn cascaded_entries(frames: usize, joints: usize, depth: usize) -> (usize, usize) {
    let enc = CascadedEncoder::new(NetworkConfig::tiny(8, depth, 3)).unwrap();
    let x = Tensor::from_fn(&[frames, joints, 3], |i| (i as f64 * 0.37).cos());
    let st = enc.attention_stats(&x).unwrap();
    (st.entries_for("spatial"), st.entries_for("joint-temporal"))
}

#[test]
fn ten_frames_seventeen_joints() {
    let (s, t) = kaa_entries(10, 17, 1, AggregationOrder::default());
    assert_eq!((s, t), (10 * 18 * 18, 10 * 10));
    assert_eq!(s + t, 3340);
    let (sp, jt) = cascaded_entries(10, 17, 1);
    assert_eq!((sp, jt), (10 * 17 * 17, 17 * 10 * 10));
    assert_eq!(sp + jt, 4590);
    assert!(s + t < sp + jt);
}

#[test]
fn star_tokens_bound_sequence_length() {
    let m = Mmdm::new(NetworkConfig::tiny(8, 1, 3)).unwrap();
    let x = Tensor::zeros(&[10, 17, 3]);
    let mut s = Session::frozen(&m.params);
    m.encode(&mut s, &x, &[false; 170], 1).unwrap();
    assert_eq!(s.stats.max_tokens("structural"), 18);
    assert_eq!(s.stats.max_tokens("temporal"), 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn counts_follow_closed_form(
        frames in 1usize..8,
        joints in 1usize..9,
        depth in 1usize..3,
        trajectory_first in any::<bool>(),
    ) {
        let order = if trajectory_first { AggregationOrder::TrajectoryFirst } else { AggregationOrder::StructureFirst };
        let (s, t) = kaa_entries(frames, joints, depth, order);
        prop_assert_eq!(s, depth * frames * (1 + joints).pow(2));
        prop_assert_eq!(t, depth * frames * frames);
        let (sp, jt) = cascaded_entries(frames, joints, depth);
        prop_assert_eq!(sp, depth * frames * joints * joints);
        prop_assert_eq!(jt, depth * joints * frames * frames);
    }
}
