//! Mask construction: pose-level random, joint-level random and
//! confidence-weighted patterns.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("weighted masking needs quality signals")]
    MissingSignals,
    #[error("mask ratio must lie in (0, 1), got {0}")]
    RatioOutOfRange(f64),
    #[error("blend coefficient must be non-negative, got {0}")]
    NegativeOmega(f64),
    #[error("signal `{name}` has {got} entries, expected {expected}")]
    SignalShape {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("signal `{name}` entry {index} = {value} is outside [0, 1]")]
    SignalRange {
        name: &'static str,
        index: usize,
        value: f64,
    },
}

pub type Result<T> = std::result::Result<T, MaskError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskPattern {
    /// `floor(r J)` joints per frame.
    #[serde(rename = "A")]
    PoseLevel,
    /// `floor(r T J)` cells anywhere in the grid.
    #[serde(rename = "B")]
    JointLevel,
    /// `floor(r T J)` cells drawn in proportion to the adaptive weight.
    #[serde(rename = "C")]
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingConfig {
    pub pattern: MaskPattern,
    pub ratio: f64,
    pub omega: f64,
    pub seed: u64,
    /// Cells with zero confidence in every view are always masked.
    pub force_invisible: bool,
}

impl MaskingConfig {
    pub const DEFAULT_OMEGA: f64 = 1.0;

    pub fn new(pattern: MaskPattern, ratio: f64, seed: u64) -> Self {
        Self {
            pattern,
            ratio,
            omega: Self::DEFAULT_OMEGA,
            seed,
            force_invisible: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(MaskError::RatioOutOfRange(self.ratio));
        }
        if !(self.omega >= 0.0) {
            return Err(MaskError::NegativeOmega(self.omega));
        }
        Ok(())
    }

    /// Number of cells the pattern masks on a `T x J` grid.
    pub fn target_count(&self, frames: usize, joints: usize) -> usize {
        match self.pattern {
            MaskPattern::PoseLevel => frames * floor_count(self.ratio, joints),
            MaskPattern::JointLevel | MaskPattern::Weighted => floor_count(self.ratio, frames * joints),
        }
    }
}

fn floor_count(r: f64, n: usize) -> usize {
    ((r * n as f64).floor() as usize).min(n)
}

/// Per-view detection confidences and per-cell triangulation errors.
#[derive(Debug, Clone, PartialEq)]
pub struct QualitySignals {
    pub views: usize,
    pub frames: usize,
    pub joints: usize,
    /// `V x T x J`
    pub rho: Vec<f64>,
    /// `T x J`
    pub sigma: Vec<f64>,
}

impl QualitySignals {
    pub fn new(views: usize, frames: usize, joints: usize, rho: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        check_signal("rho", &rho, views * frames * joints)?;
        check_signal("sigma", &sigma, frames * joints)?;
        Ok(Self {
            views,
            frames,
            joints,
            rho,
            sigma,
        })
    }

    pub fn rho_column(&self, t: usize, j: usize) -> Vec<f64> {
        (0..self.views)
            .map(|v| self.rho[(v * self.frames + t) * self.joints + j])
            .collect()
    }

    pub fn sigma_at(&self, t: usize, j: usize) -> f64 {
        self.sigma[t * self.joints + j]
    }

    pub fn invisible(&self, t: usize, j: usize) -> bool {
        self.rho_column(t, j).iter().all(|&r| r == 0.0)
    }

    /// Adaptive weights for every cell, frame-major.
    pub fn weights(&self, omega: f64) -> Vec<f64> {
        (0..self.frames * self.joints)
            .map(|c| {
                let (t, j) = (c / self.joints, c % self.joints);
                adaptive_weight(&self.rho_column(t, j), self.sigma_at(t, j), omega)
            })
            .collect()
    }

    /// Frames `start..start + len`.
    pub fn frame_range(&self, start: usize, len: usize) -> Result<Self> {
        let mut rho = Vec::with_capacity(self.views * len * self.joints);
        for v in 0..self.views {
            let o = (v * self.frames + start) * self.joints;
            rho.extend_from_slice(&self.rho[o..o + len * self.joints]);
        }
        let sigma = self.sigma[start * self.joints..(start + len) * self.joints].to_vec();
        Self::new(self.views, len, self.joints, rho, sigma)
    }
}

fn check_signal(name: &'static str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(MaskError::SignalShape {
            name,
            expected,
            got: v.len(),
        });
    }
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
        return Err(MaskError::SignalRange { name, index, value });
    }
    Ok(())
}

/// `w = omega * exp(-sum(rho)) + sigma`.
pub fn adaptive_weight(rho: &[f64], sigma: f64, omega: f64) -> f64 {
    omega * (-rho.iter().sum::<f64>()).exp() + sigma
}

/// Builds a `T x J` mask (frame-major, `true` = masked).
pub fn build_mask(
    cfg: &MaskingConfig,
    frames: usize,
    joints: usize,
    signals: Option<&QualitySignals>,
) -> Result<Vec<bool>> {
    cfg.validate()?;
    let mut r = rng::seeded(cfg.seed);
    let cells = frames * joints;
    let mut mask = vec![false; cells];
    match cfg.pattern {
        MaskPattern::PoseLevel => {
            let k = floor_count(cfg.ratio, joints);
            for t in 0..frames {
                for j in sample(&mut r, joints, k) {
                    mask[t * joints + j] = true;
                }
            }
        }
        MaskPattern::JointLevel => {
            for c in sample(&mut r, cells, cfg.target_count(frames, joints)) {
                mask[c] = true;
            }
        }
        MaskPattern::Weighted => {
            let s = signals.ok_or(MaskError::MissingSignals)?;
            if s.frames != frames || s.joints != joints {
                return Err(MaskError::SignalShape {
                    name: "sigma",
                    expected: cells,
                    got: s.frames * s.joints,
                });
            }
            let mut weights = s.weights(cfg.omega);
            let mut chosen = 0;
            if cfg.force_invisible {
                for c in 0..cells {
                    if s.invisible(c / joints, c % joints) {
                        mask[c] = true;
                        weights[c] = 0.0;
                        chosen += 1;
                    }
                }
            }
            let target = cfg.target_count(frames, joints);
            while chosen < target {
                let c = weighted_draw(&mut r, &weights, &mask);
                mask[c] = true;
                weights[c] = 0.0;
                chosen += 1;
            }
        }
    }
    Ok(mask)
}

/// One draw proportional to `weights` over unmasked cells. Ties on the
/// cumulative sum resolve to the lowest index; a zero remaining total falls
/// back to a uniform draw over the unmasked cells.
fn weighted_draw(r: &mut rng::Rng, weights: &[f64], taken: &[bool]) -> usize {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        let u = r.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = None;
        for (c, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = Some(c);
            if u < acc {
                return c;
            }
        }
        if let Some(c) = last {
            return c;
        }
    }
    let free: Vec<usize> = (0..taken.len()).filter(|&c| !taken[c]).collect();
    free[r.random_range(0..free.len())]
}
