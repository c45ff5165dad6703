use serde::{Deserialize, Serialize};

use super::{DiffusionError, Result};

pub const DEFAULT_TAIL: f64 = 1e-2;
const BETA_MAX: f64 = 0.999;
const RAMP_START: f64 = 1e-4;
const RAMP_END: f64 = 2e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    ScaledLinear,
    Cosine,
}

/// Betas for steps `1..=K`; `alpha_bar[0] = 1` by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn new(steps: usize, kind: ScheduleKind, tail: f64) -> Result<Self> {
        if steps == 0 {
            return Err(DiffusionError::NoSteps);
        }
        let betas = match kind {
            ScheduleKind::ScaledLinear => scaled_linear(steps, tail)?,
            ScheduleKind::Cosine => cosine(steps),
        };
        let s = Self::from_betas(betas)?;
        if s.alpha_bar(steps) > tail {
            return Err(DiffusionError::UnreachableTail { steps, tail });
        }
        Ok(s)
    }

    /// Linear ramp scaled so that `alpha_bar_K` equals `tail`, for chains
    /// that start from a noisy observation instead of pure noise.
    pub fn noisy_start(steps: usize, tail: f64) -> Result<Self> {
        if steps == 0 {
            return Err(DiffusionError::NoSteps);
        }
        if !(tail > (1.0 - BETA_MAX).powi(steps as i32) && tail < 1.0) {
            return Err(DiffusionError::UnreachableTail { steps, tail });
        }
        let base = ramp(steps);
        let (mut lo, mut hi) = (0.0, BETA_MAX / RAMP_START);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if tail_product(&base, mid) > tail {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::from_betas(base.iter().map(|b| (b * lo).min(BETA_MAX)).collect())
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(DiffusionError::NoSteps);
        }
        if let Some((i, &b)) = betas.iter().enumerate().find(|(_, b)| !(**b > 0.0 && **b < 1.0)) {
            return Err(DiffusionError::InvalidBeta { step: i + 1, value: b });
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        for a in &alphas {
            let last = *alpha_bars.last().expect("non-empty");
            alpha_bars.push(last * a);
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `alpha_bar[k]` for `k = 0..=K`.
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn alpha_bar(&self, k: usize) -> f64 {
        self.alpha_bars[k]
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.betas[k - 1]
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.alphas[k - 1]
    }

    pub fn check_step(&self, k: usize) -> Result<()> {
        if k > self.steps() {
            return Err(DiffusionError::StepOutOfRange {
                step: k,
                max: self.steps(),
            });
        }
        Ok(())
    }

    /// Variance of `q(x_{k-1} | x_k, x_0)`.
    pub fn posterior_variance(&self, k: usize) -> f64 {
        self.beta(k) * (1.0 - self.alpha_bar(k - 1)) / (1.0 - self.alpha_bar(k))
    }

    /// Coefficients `(c0, ck)` of the posterior mean `c0 x0 + ck x_k`.
    pub fn posterior_coefs(&self, k: usize) -> (f64, f64) {
        let denom = 1.0 - self.alpha_bar(k);
        (
            self.alpha_bar(k - 1).sqrt() * self.beta(k) / denom,
            self.alpha(k).sqrt() * (1.0 - self.alpha_bar(k - 1)) / denom,
        )
    }
}

fn tail_product(base: &[f64], scale: f64) -> f64 {
    base.iter().map(|b| 1.0 - (b * scale).min(BETA_MAX)).product()
}

fn ramp(steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|i| {
            if steps == 1 {
                RAMP_START
            } else {
                RAMP_START + (RAMP_END - RAMP_START) * i as f64 / (steps - 1) as f64
            }
        })
        .collect()
}

fn scaled_linear(steps: usize, tail: f64) -> Result<Vec<f64>> {
    let base = ramp(steps);
    let floor = (1.0 - BETA_MAX).powi(steps as i32);
    if floor > tail {
        return Err(DiffusionError::UnreachableTail { steps, tail });
    }
    let mut scale = 1.0;
    if tail_product(&base, scale) > tail {
        let mut lo = 1.0;
        let mut hi = BETA_MAX / RAMP_START;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if tail_product(&base, mid) > tail {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        scale = hi;
    }
    Ok(base.iter().map(|b| (b * scale).min(BETA_MAX)).collect())
}

fn cosine(steps: usize) -> Vec<f64> {
    let s = 0.008;
    let f = |t: f64| (((t / steps as f64) + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos().powi(2);
    (1..=steps)
        .map(|k| (1.0 - f(k as f64) / f((k - 1) as f64)).clamp(1e-8, BETA_MAX))
        .collect()
}
