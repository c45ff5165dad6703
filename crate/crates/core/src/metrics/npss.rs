use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{same_shape, MetricError, Result};
use crate::motion::MotionSequence;

/// One-sided power spectrum of `x` without the zero-frequency bin:
/// `|X_k|^2` for `k = 1..=T/2`.
pub fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[1..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

fn cdf(p: &[f64]) -> Vec<f64> {
    let total: f64 = p.iter().sum();
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            if total > 0.0 {
                acc += v / total;
            }
            acc
        })
        .collect()
}

/// Normalized power spectrum similarity. Every joint feature is a channel;
/// per channel the distance is the L1 gap between the cumulative normalized
/// spectra, and channels are averaged with weights equal to their
/// ground-truth power (prediction power if the ground truth has none).
pub fn npss(pred: &MotionSequence, gt: &MotionSequence) -> Result<f64> {
    same_shape(pred, gt)?;
    let frames = gt.frames();
    if frames < 2 {
        return Err(MetricError::TooShort { needed: 2, got: frames });
    }
    let channels = gt.joints() * gt.dim();
    let column = |m: &MotionSequence, c: usize| -> Vec<f64> { (0..frames).map(|t| m.values()[t * channels + c]).collect() };
    let mut emd = Vec::with_capacity(channels);
    let mut w_gt = Vec::with_capacity(channels);
    let mut w_pred = Vec::with_capacity(channels);
    for c in 0..channels {
        let pg = power_spectrum(&column(gt, c));
        let pp = power_spectrum(&column(pred, c));
        let d: f64 = cdf(&pg).iter().zip(cdf(&pp)).map(|(a, b)| (a - b).abs()).sum();
        emd.push(d);
        w_gt.push(pg.iter().sum::<f64>());
        w_pred.push(pp.iter().sum::<f64>());
    }
    let weighted = |w: &[f64]| {
        let total: f64 = w.iter().sum();
        (total > 0.0).then(|| w.iter().zip(&emd).map(|(w, d)| w * d).sum::<f64>() / total)
    };
    Ok(weighted(&w_gt).or_else(|| weighted(&w_pred)).unwrap_or(0.0))
}
