//! Analytic gradients against central finite differences (h = 1e-6) for
//! every differentiable operation, on random inputs in [-1, 1].

use mmdm_tensor::numeric::{central_difference, relative_error};
use mmdm_tensor::{Graph, Result, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;
const SEEDS: u64 = 10;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Builds `f` on fresh leaves, differentiates it, and compares with finite
/// differences. `f` must reduce to a scalar.
fn check<F>(name: &str, shapes: &[&[usize]], f: F)
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
        // A fixed random projection keeps the loss from being a plain sum.
        let eval = |ts: &[Tensor]| -> (Graph, Vec<Var>, Var) {
            let mut g = Graph::new();
            let vars: Vec<Var> = ts.iter().map(|t| g.param(t.clone())).collect();
            let out = f(&mut g, &vars).unwrap();
            let mut prng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let w = rand_tensor(&mut prng, g.shape(out));
            let w = g.input(w);
            let p = g.mul(out, w).unwrap();
            let l = g.sum(p).unwrap();
            (g, vars, l)
        };
        let (g, vars, loss) = eval(&inputs);
        let grads = g.backward(loss).unwrap();
        let numeric = central_difference(
            |ts| {
                let (g, _, l) = eval(ts);
                g.value(l).item()
            },
            &inputs,
            H,
        );
        for (i, v) in vars.iter().enumerate() {
            let analytic = grads
                .get(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
            let err = relative_error(analytic.data(), numeric[i].data());
            assert!(err < TOL, "{name}: input {i} seed {seed} rel err {err:e}");
        }
    }
}

#[test]
fn grad_add_broadcast() {
    check("add", &[&[3, 4], &[4]], |g, v| g.add(v[0], v[1]));
}

#[test]
fn grad_sub_broadcast() {
    check("sub", &[&[2, 1, 3], &[2, 4, 1]], |g, v| g.sub(v[0], v[1]));
}

#[test]
fn grad_mul_broadcast() {
    check("mul", &[&[2, 3, 4], &[2, 1, 4]], |g, v| g.mul(v[0], v[1]));
}

#[test]
fn grad_scale_square() {
    check("scale", &[&[5]], |g, v| {
        let s = g.square(v[0])?;
        g.scale(s, -0.7)
    });
}

#[test]
fn grad_matmul() {
    check("matmul", &[&[3, 4], &[4, 2]], |g, v| g.matmul(v[0], v[1]));
}

#[test]
fn grad_batched_matmul() {
    check("bmm", &[&[2, 3, 3, 4], &[2, 3, 4, 2]], |g, v| g.matmul(v[0], v[1]));
    check("bmm-shared", &[&[2, 3, 4], &[4, 5]], |g, v| g.matmul(v[0], v[1]));
}

#[test]
fn grad_permute_transpose_reshape() {
    check("permute", &[&[2, 3, 4]], |g, v| g.permute(v[0], &[2, 0, 1]));
    check("transpose", &[&[2, 3, 4]], |g, v| g.transpose(v[0]));
    check("reshape", &[&[2, 6]], |g, v| g.reshape(v[0], &[3, 4]));
}

#[test]
fn grad_softmax() {
    check("softmax-last", &[&[3, 5]], |g, v| g.softmax(v[0], 1));
    check("softmax-mid", &[&[2, 4, 3]], |g, v| g.softmax(v[0], 1));
}

#[test]
fn grad_layer_norm() {
    check("layer_norm", &[&[4, 6], &[6], &[6]], |g, v| g.layer_norm(v[0], v[1], v[2]));
}

#[test]
fn grad_gelu() {
    check("gelu", &[&[7]], |g, v| g.gelu(v[0]));
}

#[test]
fn grad_concat_slice_select() {
    check("concat", &[&[2, 1, 3], &[2, 2, 3]], |g, v| g.concat(&[v[0], v[1]], 1));
    check("slice", &[&[3, 5]], |g, v| g.slice(v[0], 1, 1, 3));
    check("select", &[&[4, 3]], |g, v| g.index_select(v[0], &[3, 0, 3, 1]));
}

#[test]
fn grad_reductions() {
    check("mean", &[&[3, 2]], |g, v| {
        let s = g.square(v[0])?;
        let m = g.mean(s)?;
        g.reshape(m, &[1])
    });
}

/// Two stacked single-head pre-norm self-attention blocks.
fn attention_block(g: &mut Graph, v: &[Var]) -> Result<Var> {
    let (x, wq, wk, wv, wo, gain, bias) = (v[0], v[1], v[2], v[3], v[4], v[5], v[6]);
    let mut h = x;
    for _ in 0..2 {
        let n = g.layer_norm(h, gain, bias)?;
        let q = g.matmul(n, wq)?;
        let k = g.matmul(n, wk)?;
        let val = g.matmul(n, wv)?;
        let kt = g.transpose(k)?;
        let s = g.matmul(q, kt)?;
        let s = g.scale(s, 0.5)?;
        let a = g.softmax(s, 1)?;
        let o = g.matmul(a, val)?;
        let o = g.matmul(o, wo)?;
        let o = g.gelu(o)?;
        h = g.add(h, o)?;
    }
    Ok(h)
}

#[test]
fn grad_two_layer_attention() {
    check(
        "attention",
        &[&[5, 4], &[4, 4], &[4, 4], &[4, 4], &[4, 4], &[4], &[4]],
        attention_block,
    );
}

#[test]
fn forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs: Vec<Tensor> = [&[5usize, 4][..], &[4, 4], &[4, 4], &[4, 4], &[4, 4], &[4], &[4]]
        .iter()
        .map(|s| rand_tensor(&mut rng, s))
        .collect();
    let run = || {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let out = attention_block(&mut g, &vars).unwrap();
        let l = g.sum(out).unwrap();
        let grads = g.backward(l).unwrap();
        (g.value(out).clone(), grads.get(vars[1]).unwrap().clone())
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert_eq!(a.data(), b.data());
    assert_eq!(ga.data(), gb.data());
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(data in proptest::collection::vec(-50.0f64..50.0, 12), shift in -500.0f64..500.0) {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![3, 4], data.clone()).unwrap());
        let y = g.softmax(x, 1).unwrap();
        let shifted = g.input(Tensor::new(vec![3, 4], data.iter().map(|v| v + shift).collect()).unwrap());
        let ys = g.softmax(shifted, 1).unwrap();
        for r in 0..3 {
            let row = &g.value(y).data()[r * 4..(r + 1) * 4];
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(g.value(y).max_abs_diff(g.value(ys)) < 1e-12);
    }

    #[test]
    fn layer_norm_standardizes(data in proptest::collection::vec(-10.0f64..10.0, 16)) {
        let spread = data.iter().cloned().fold(f64::MIN, f64::max) - data.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 1e-2);
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, 16], data).unwrap());
        let gain = g.input(Tensor::ones(&[16]));
        let bias = g.input(Tensor::zeros(&[16]));
        let y = g.layer_norm(x, gain, bias).unwrap();
        let v = g.value(y).data();
        let mean = v.iter().sum::<f64>() / 16.0;
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 16.0;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((var - 1.0).abs() < 1e-9);
    }
}
