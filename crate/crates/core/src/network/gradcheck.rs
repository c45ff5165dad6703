//! Finite-difference checks of the gradients a [`Session`] produces, for
//! both parameters and differentiable inputs.

use mmdm_tensor::numeric::central_difference_at;
use mmdm_tensor::{Tensor, Var};
use rand::seq::index::sample;

use super::params::{ParamStore, Session};
use super::Result;
use crate::rng;

/// Worst relative error seen by [`check_session`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub worst: f64,
    pub worst_name: String,
    pub probed: usize,
}

fn loss_of<F>(store: &ParamStore, inputs: &[Tensor], weights: &Tensor, f: &F, grad: bool) -> Result<(f64, Option<Vec<Tensor>>, Vec<Tensor>)>
where
    F: Fn(&mut Session, &[Var]) -> Result<Var>,
{
    let mut s = if grad { Session::new(store) } else { Session::frozen(store) };
    let vars: Vec<Var> = inputs.iter().map(|t| s.g.leaf(t.clone(), grad)).collect();
    let out = f(&mut s, &vars)?;
    let w = s.g.input(weights.clone().reshape(s.g.shape(out))?);
    let p = s.g.mul(out, w)?;
    let l = s.g.sum(p)?;
    let value = s.g.value(l).item();
    if !grad {
        return Ok((value, None, Vec::new()));
    }
    let mut grads = s.g.backward(l)?;
    let inputs_grad = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    let params = store
        .names()
        .iter()
        .zip(store.tensors())
        .map(|(n, t)| {
            s.p(n)
                .ok()
                .and_then(|v| grads.take(v))
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();
    Ok((value, Some(params), inputs_grad))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Per tensor, `max|a - n| / max(max|a|, max|n|, FLOOR * G)` where `G` is
/// the largest gradient entry over all probes. The floor keeps gradients
/// that are exactly zero (such as a key bias under softmax) from comparing
/// rounding noise against rounding noise.
fn summarize(probes: Vec<(String, Vec<f64>, Vec<f64>)>) -> GradCheck {
    const FLOOR: f64 = 1e-4;
    let global = probes.iter().map(|p| max_abs(&p.1).max(max_abs(&p.2))).fold(0.0, f64::max);
    let mut report = GradCheck {
        worst: 0.0,
        worst_name: String::new(),
        probed: 0,
    };
    for (name, a, n) in probes {
        let diff = a.iter().zip(&n).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let scale = max_abs(&a).max(max_abs(&n)).max(FLOOR * global);
        let e = if scale > 0.0 { diff / scale } else { 0.0 };
        report.probed += a.len();
        if e > report.worst || report.worst_name.is_empty() {
            report.worst = e;
            report.worst_name = name;
        }
    }
    report
}

/// Compares analytic and central-difference gradients of
/// `sum(f(inputs) * w)` for a fixed random `w`. Every input entry is probed;
/// for each parameter tensor up to `per_param` random entries are probed.
pub fn check_session<F>(store: &ParamStore, inputs: &[Tensor], per_param: usize, seed: u64, h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Session, &[Var]) -> Result<Var>,
{
    let mut r = rng::seeded(seed);
    let probe = {
        let mut s = Session::frozen(store);
        let vars: Vec<Var> = inputs.iter().map(|t| s.g.input(t.clone())).collect();
        let out = f(&mut s, &vars)?;
        s.g.value(out).numel()
    };
    let weights = Tensor::from_fn(&[probe], |_| rng::normal(&mut r));
    let (_, params_grad, inputs_grad) = loss_of(store, inputs, &weights, &f, true)?;
    let params_grad = params_grad.expect("gradients requested");
    let mut probes: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        let entries: Vec<usize> = (0..t.numel()).collect();
        let numeric = central_difference_at(
            |x| {
                let mut ins = inputs.to_vec();
                ins[i] = x.clone();
                loss_of(store, &ins, &weights, &f, false).map(|v| v.0).unwrap_or(f64::NAN)
            },
            t,
            &entries,
            h,
        );
        probes.push((format!("input {i}"), inputs_grad[i].data().to_vec(), numeric));
    }
    for (p, (name, t)) in store.names().iter().zip(store.tensors()).enumerate() {
        let n = per_param.min(t.numel());
        let entries = sample(&mut r, t.numel(), n).into_vec();
        let numeric = central_difference_at(
            |x| {
                let mut st = store.clone();
                st.tensors_mut()[p] = x.clone();
                loss_of(&st, inputs, &weights, &f, false).map(|v| v.0).unwrap_or(f64::NAN)
            },
            t,
            &entries,
            h,
        );
        let analytic = entries.iter().map(|&e| params_grad[p].data()[e]).collect();
        probes.push((name.clone(), analytic, numeric));
    }
    Ok(summarize(probes))
}
