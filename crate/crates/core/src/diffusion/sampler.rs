use rand::Rng as _;

use super::{DiffusionError, DiffusionSchedule, Result};
use crate::rng::{self, Rng};

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(DiffusionError::ShapeMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// `x_k = sqrt(ab_k) x0 + sqrt(1 - ab_k) eps`.
pub fn forward_diffuse(x0: &[f64], k: usize, eps: &[f64], s: &DiffusionSchedule) -> Result<Vec<f64>> {
    same_len(x0, eps)?;
    s.check_step(k)?;
    let ab = s.alpha_bar(k);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// A training sample: the noised values, step and the noise drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisedState {
    pub x_k: Vec<f64>,
    pub k: usize,
    pub eps: Vec<f64>,
}

/// Draws a step in `1..=K` and fresh noise.
pub fn noised_state(x0: &[f64], s: &DiffusionSchedule, r: &mut Rng) -> NoisedState {
    let k = r.random_range(1..=s.steps());
    let eps = rng::normal_vec(r, x0.len());
    let x_k = forward_diffuse(x0, k, &eps, s).expect("noise matches input length");
    NoisedState { x_k, k, eps }
}

pub fn eps_from_x0(x_k: &[f64], x0: &[f64], k: usize, s: &DiffusionSchedule) -> Result<Vec<f64>> {
    same_len(x_k, x0)?;
    s.check_step(k)?;
    let ab = s.alpha_bar(k);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x_k.iter().zip(x0).map(|(x, z)| (x - a * z) / b).collect())
}

pub fn x0_from_eps(x_k: &[f64], eps: &[f64], k: usize, s: &DiffusionSchedule) -> Result<Vec<f64>> {
    same_len(x_k, eps)?;
    s.check_step(k)?;
    let ab = s.alpha_bar(k);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x_k.iter().zip(eps).map(|(x, e)| (x - b * e) / a).collect())
}

/// Posterior mean for a signal prediction.
pub fn posterior_mean(x0_hat: &[f64], x_k: &[f64], k: usize, s: &DiffusionSchedule) -> Vec<f64> {
    let (c0, ck) = s.posterior_coefs(k);
    x0_hat.iter().zip(x_k).map(|(a, b)| c0 * a + ck * b).collect()
}

/// One ancestral step from `k` to `k - 1`. `noise` overrides the Gaussian
/// draw; at `k = 1` the prediction itself is returned.
pub fn reverse_step_ddpm(
    x0_hat: &[f64],
    x_k: &[f64],
    k: usize,
    s: &DiffusionSchedule,
    noise: Option<&[f64]>,
    r: &mut Rng,
) -> Result<Vec<f64>> {
    same_len(x0_hat, x_k)?;
    if k == 0 {
        return Err(DiffusionError::StepOutOfRange {
            step: k,
            max: s.steps(),
        });
    }
    s.check_step(k)?;
    if k == 1 {
        return Ok(x0_hat.to_vec());
    }
    let mut mean = posterior_mean(x0_hat, x_k, k, s);
    let sd = s.posterior_variance(k).sqrt();
    match noise {
        Some(z) => {
            same_len(z, x_k)?;
            mean.iter_mut().zip(z).for_each(|(m, z)| *m += sd * z);
        }
        None => mean.iter_mut().for_each(|m| *m += sd * rng::normal(r)),
    }
    Ok(mean)
}

/// Deterministic (eta = 0) jump from `k` to `next`.
pub fn reverse_step_ddim(
    x0_hat: &[f64],
    x_k: &[f64],
    k: usize,
    next: usize,
    s: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    same_len(x0_hat, x_k)?;
    s.check_step(k)?;
    if next >= k {
        return Err(DiffusionError::StepOrder { current: k, next });
    }
    if next == 0 {
        return Ok(x0_hat.to_vec());
    }
    let eps = eps_from_x0(x_k, x0_hat, k, s)?;
    let ab = s.alpha_bar(next);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0_hat.iter().zip(&eps).map(|(x, e)| a * x + b * e).collect())
}

/// Visited steps for a DDIM speed-up ratio: `K, K - n, ..., 0`.
pub fn ddim_timesteps(steps: usize, speedup: usize) -> Result<Vec<usize>> {
    if speedup == 0 {
        return Err(DiffusionError::ZeroStride);
    }
    let mut v: Vec<usize> = (0..=steps).rev().step_by(speedup).collect();
    if *v.last().expect("non-empty") != 0 {
        v.push(0);
    }
    Ok(v)
}

/// Visited steps when the trajectory is cut into `jumps` equal jumps.
pub fn ddim_timesteps_jumps(steps: usize, jumps: usize) -> Result<Vec<usize>> {
    if jumps == 0 {
        return Err(DiffusionError::ZeroStride);
    }
    ddim_timesteps(steps, (steps / jumps).max(1))
}

/// Overwrites unmasked cells of `x` with `original`.
pub fn restore_unmasked(x: &mut [f64], original: &[f64], mask: &[bool], dim: usize) -> Result<()> {
    same_len(x, original)?;
    if mask.len() * dim != x.len() {
        return Err(DiffusionError::ShapeMismatch(mask.len() * dim, x.len()));
    }
    for (c, &m) in mask.iter().enumerate() {
        if !m {
            x[c * dim..(c + 1) * dim].copy_from_slice(&original[c * dim..(c + 1) * dim]);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Ddpm,
    /// Deterministic sampling with a speed-up ratio.
    Ddim(usize),
}

/// Runs the reverse chain from `x_start` at step `K`. `predict` maps
/// `(x_k, k)` to a signal estimate; `after` runs on every new state with the
/// step it now sits at.
pub fn sample_loop<P, A>(
    s: &DiffusionSchedule,
    sampler: Sampler,
    x_start: Vec<f64>,
    r: &mut Rng,
    mut predict: P,
    mut after: A,
) -> Result<Vec<f64>>
where
    P: FnMut(&[f64], usize) -> Result<Vec<f64>>,
    A: FnMut(&mut Vec<f64>, usize) -> Result<()>,
{
    let mut x = x_start;
    match sampler {
        Sampler::Ddpm => {
            for k in (1..=s.steps()).rev() {
                let x0 = predict(&x, k)?;
                x = reverse_step_ddpm(&x0, &x, k, s, None, r)?;
                after(&mut x, k - 1)?;
            }
        }
        Sampler::Ddim(n) => {
            let ts = ddim_timesteps(s.steps(), n)?;
            for w in ts.windows(2) {
                let x0 = predict(&x, w[0])?;
                x = reverse_step_ddim(&x0, &x, w[0], w[1], s)?;
                after(&mut x, w[1])?;
            }
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleKind;

    fn sched() -> DiffusionSchedule {
        DiffusionSchedule::new(50, ScheduleKind::ScaledLinear, 1e-2).unwrap()
    }

    #[test]
    fn forward_hand_value() {
        let s = DiffusionSchedule::from_betas(vec![0.75]).unwrap();
        let x = forward_diffuse(&[2.0], 1, &[-1.0], &s).unwrap();
        assert!((x[0] - (1.0 - 0.75f64.sqrt())).abs() < 1e-15);
        assert!((x[0] - 0.133975).abs() < 1e-6);
    }

    #[test]
    fn step_zero_is_identity() {
        let s = sched();
        assert_eq!(forward_diffuse(&[1.5, -2.0], 0, &[9.0, 9.0], &s).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn ddpm_last_step_returns_prediction() {
        let s = sched();
        let mut r = rng::seeded(0);
        let x0 = [0.3, -0.2];
        assert_eq!(reverse_step_ddpm(&x0, &[5.0, 1.0], 1, &s, None, &mut r).unwrap(), x0);
    }

    #[test]
    fn ddpm_zero_noise_is_mean() {
        let s = sched();
        let mut r = rng::seeded(0);
        let (x0, xk) = ([0.3, -0.2], [1.0, 0.5]);
        let out = reverse_step_ddpm(&x0, &xk, 10, &s, Some(&[0.0, 0.0]), &mut r).unwrap();
        assert_eq!(out, posterior_mean(&x0, &xk, 10, &s));
    }

    #[test]
    fn ddim_errors_and_single_jump() {
        let s = sched();
        assert!(matches!(
            reverse_step_ddim(&[0.0], &[0.0], 5, 5, &s),
            Err(DiffusionError::StepOrder { .. })
        ));
        assert_eq!(reverse_step_ddim(&[0.7], &[3.0], 50, 0, &s).unwrap(), vec![0.7]);
    }

    #[test]
    fn ddim_schedules() {
        assert_eq!(ddim_timesteps(50, 10).unwrap(), vec![50, 40, 30, 20, 10, 0]);
        assert_eq!(ddim_timesteps_jumps(50, 5).unwrap(), vec![50, 40, 30, 20, 10, 0]);
        assert_eq!(ddim_timesteps(50, 5).unwrap().len(), 11);
        assert_eq!(ddim_timesteps(7, 3).unwrap(), vec![7, 4, 1, 0]);
        assert_eq!(ddim_timesteps(4, 1).unwrap(), vec![4, 3, 2, 1, 0]);
    }

    #[test]
    fn restore_selects_cells() {
        let mut x = vec![1.0, 2.0, 3.0, 4.0];
        restore_unmasked(&mut x, &[9.0, 8.0, 7.0, 6.0], &[true, false], 2).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 7.0, 6.0]);
    }

    #[test]
    fn eps_round_trip() {
        let s = sched();
        let xk = [0.4, -1.1];
        let x0 = [0.1, 0.2];
        let e = eps_from_x0(&xk, &x0, 20, &s).unwrap();
        let back = x0_from_eps(&xk, &e, 20, &s).unwrap();
        for (a, b) in back.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
