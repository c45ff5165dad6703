//! Central finite-difference gradients, used as an independent check on
//! [`Graph::backward`](crate::Graph::backward). Only forward evaluations
//! are involved.

use crate::Tensor;

/// Central-difference gradient of `f` at `inputs`, one tensor per input.
pub fn central_difference<F>(mut f: F, inputs: &[Tensor], h: f64) -> Vec<Tensor>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut grad = Tensor::zeros(inputs[i].shape());
        for e in 0..inputs[i].numel() {
            let x0 = work[i].data()[e];
            work[i].data_mut()[e] = x0 + h;
            let fp = f(&work);
            work[i].data_mut()[e] = x0 - h;
            let fm = f(&work);
            work[i].data_mut()[e] = x0;
            grad.data_mut()[e] = (fp - fm) / (2.0 * h);
        }
        out.push(grad);
    }
    out
}

/// As [`central_difference`] for one input, probing only the listed
/// flat entries. Entries not probed are left at zero.
pub fn central_difference_at<F>(mut f: F, input: &Tensor, entries: &[usize], h: f64) -> Vec<f64>
where
    F: FnMut(&Tensor) -> f64,
{
    let mut work = input.clone();
    entries
        .iter()
        .map(|&e| {
            let x0 = work.data()[e];
            work.data_mut()[e] = x0 + h;
            let fp = f(&work);
            work.data_mut()[e] = x0 - h;
            let fm = f(&work);
            work.data_mut()[e] = x0;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Relative error `max|a - n| / max(max|a|, max|n|)` between an analytic
/// and a numeric gradient. Pairs whose magnitudes both sit below
/// `1e-10` compare as equal.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    debug_assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale < 1e-10 {
        return 0.0;
    }
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    diff / scale
}
