//! Network blocks and the tiny full models against central differences.

use mmdm_core::motion::SegmentSplit;
use mmdm_core::network::gradcheck::check_session;
use mmdm_core::network::{
    attention, ffn, kaa_round, key_bias, linear, norm, self_block, structural_attention, temporal_attention,
    AggregationOrder, DecoderMode, InbetweenModel, LatentState, Mmdm, NetworkConfig, ParamStore,
};
use mmdm_core::rng;
use mmdm_tensor::Tensor;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;
const SEEDS: u64 = 10;
const PER_PARAM: usize = 6;

fn rand(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    Tensor::from_fn(shape, |_| rng::normal(&mut r))
}

fn tiny(init_seed: u64) -> Mmdm {
    let mut cfg = NetworkConfig::tiny(16, 1, 3);
    cfg.init_seed = init_seed;
    let mut m = Mmdm::new(cfg).unwrap();
    perturb(&mut m.params, init_seed);
    m
}

/// Freshly initialized norms and biases sit at exactly 1 and 0; move them so
/// their gradients are exercised away from that point.
fn perturb(p: &mut ParamStore, seed: u64) {
    let mut r = rng::seeded(seed ^ 0x5eed);
    for t in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += 0.1 * rng::normal(&mut r));
    }
}

fn assert_ok(name: &str, check: mmdm_core::network::gradcheck::GradCheck) {
    assert!(
        check.worst < TOL,
        "{name}: worst relative error {:e} at {}",
        check.worst,
        check.worst_name
    );
}

#[test]
fn linear_norm_ffn() {
    for seed in 0..SEEDS {
        let m = tiny(seed);
        let x = rand(&[3, 4, 16], 100 + seed);
        let c = check_session(&m.params, &[x.clone()], PER_PARAM, seed, H, |s, v| linear(s, "dec.head", v[0])).unwrap();
        assert_ok("linear", c);
        let c = check_session(&m.params, &[x.clone()], PER_PARAM, seed, H, |s, v| norm(s, "dec.ln", v[0])).unwrap();
        assert_ok("norm", c);
        let c = check_session(&m.params, &[x], PER_PARAM, seed, H, |s, v| ffn(s, "dec.b0.ffn", v[0])).unwrap();
        assert_ok("ffn", c);
    }
}

#[test]
fn attention_blocks() {
    for seed in 0..SEEDS {
        let m = tiny(seed);
        let q = rand(&[2, 3, 16], 200 + seed);
        let kv = rand(&[2, 5, 16], 300 + seed);
        let c = check_session(&m.params, &[q.clone(), kv], PER_PARAM, seed, H, |s, v| {
            attention(s, "dec.b0.xattn", "cross", v[0], v[1], None, 2)
        })
        .unwrap();
        assert_ok("cross attention", c);
        let bias = key_bias(&[false, true, false, false, true, false], 2, 3);
        let c = check_session(&m.params, &[q], PER_PARAM, seed, H, |s, v| {
            self_block(s, "enc.r0.sa", "structural", v[0], Some(&bias), 2)
        })
        .unwrap();
        assert_ok("masked self block", c);
    }
}

#[test]
fn structural_and_temporal() {
    for seed in 0..SEEDS {
        let m = tiny(seed);
        let tokens = rand(&[4, 6, 16], 400 + seed);
        let c = check_session(&m.params, &[tokens], PER_PARAM, seed, H, |s, v| {
            structural_attention(s, "enc.r0.sa", v[0], None, 2)
        })
        .unwrap();
        assert_ok("structural", c);
        let stars = rand(&[4, 16], 500 + seed);
        let c = check_session(&m.params, &[stars], PER_PARAM, seed, H, |s, v| temporal_attention(s, "enc.r0.ta", v[0], 2))
            .unwrap();
        assert_ok("temporal", c);
    }
}

#[test]
fn aggregation_round_both_orders() {
    for seed in 0..SEEDS {
        let m = tiny(seed);
        let h = rand(&[3, 5, 16], 600 + seed);
        let star = rand(&[3, 16], 700 + seed);
        for order in [AggregationOrder::StructureFirst, AggregationOrder::TrajectoryFirst] {
            let c = check_session(&m.params, &[h.clone(), star.clone()], PER_PARAM, seed, H, |s, v| {
                let st = kaa_round(s, "enc.r0", LatentState { h: v[0], star: v[1], prefix: None }, order, None, 2)?;
                let hs = s.g.sum(st.h)?;
                let ss = s.g.square(st.star)?;
                let ss = s.g.sum(ss)?;
                let both = s.g.add(hs, ss)?;
                Ok(both)
            })
            .unwrap();
            assert_ok("kaa round", c);
        }
    }
}

#[test]
fn full_tiny_model() {
    for seed in 0..SEEDS {
        let m = tiny(seed);
        let cond = rand(&[4, 5, 3], 800 + seed);
        let x_k = rand(&[4, 5, 3], 900 + seed);
        let mut r = rng::seeded(seed);
        let mask: Vec<bool> = (0..20).map(|_| rng::normal(&mut r) < -0.25).collect();
        let c = check_session(&m.params, &[x_k.clone()], PER_PARAM, seed, H, |s, v| m.forward(s, &cond, v[0], &mask, 7))
            .unwrap();
        assert_ok("mmdm", c);
        let mut mae_cfg = m.cfg.clone();
        mae_cfg.decoder_mode = DecoderMode::Mae;
        let mae = Mmdm::from_params(mae_cfg, m.params.clone()).unwrap();
        let c = check_session(&mae.params, &[x_k], PER_PARAM, seed, H, |s, v| mae.forward(s, &cond, v[0], &mask, 0)).unwrap();
        assert_ok("mae", c);
    }
}

#[test]
fn inbetween_model() {
    let split = SegmentSplit::new(1, 2, 1, 4).unwrap();
    for seed in 0..SEEDS {
        let mut cfg = NetworkConfig::tiny(16, 1, 12);
        cfg.init_seed = seed;
        let mut m = InbetweenModel::new(cfg).unwrap();
        perturb(&mut m.params, seed);
        let x = rand(&[4, 22, 12], 1000 + seed);
        let c = check_session(&m.params, &[x], PER_PARAM, seed, H, |s, v| m.forward(s, v[0], &split, Some(2), 5)).unwrap();
        assert_ok("inbetween", c);
    }
}
