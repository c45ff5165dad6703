//! Datasets and the value transforms between motion space and model space.

use super::config::TaskConfig;
use super::{PipelineError, Result};
use crate::masking::QualitySignals;
use crate::mocap::{default_rig, normalize_sigma, simulate_detections, triangulate, Camera, DetectionParams, SIGMA_MAX_PX};
use crate::motion::repr::{pack_joint_level, synth_bundle, TOKENS, TOKEN_DIM};
use crate::motion::{denormalize_centroid, normalize_centroid, normalize_centroid_unmasked, synth_motion, MotionSequence};
use crate::rng::derive_seed;

/// A 3D motion with the quality signals of its simulated capture.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub motion: MotionSequence,
    pub signals: QualitySignals,
}

/// Per-joint confidences and triangulation errors for a single-person
/// capture, using the known identity of every detection.
pub fn capture_signals(m: &MotionSequence, rig: &[Camera], params: &DetectionParams, seed: u64) -> Result<QualitySignals> {
    let det = simulate_detections(std::slice::from_ref(m), rig, params, seed)?;
    let (views, frames, joints) = (det.views, det.frames, det.joints);
    let mut rho = vec![0.0; views * frames * joints];
    let mut sigma = vec![1.0; frames * joints];
    for t in 0..frames {
        for j in 0..joints {
            let mut obs = vec![None; views];
            for v in 0..views {
                rho[(v * frames + t) * joints + j] = det.confidence(0, v, t, j);
                if det.visible(0, v, t, j) {
                    obs[v] = Some(det.point(0, v, t, j));
                }
            }
            if let Ok((_, rms)) = triangulate(&obs, rig) {
                sigma[t * joints + j] = normalize_sigma(rms, SIGMA_MAX_PX);
            }
        }
    }
    Ok(QualitySignals::new(views, frames, joints, rho, sigma)?)
}

/// The seeded synthetic completion set described by `cfg.data`.
pub fn completion_dataset(cfg: &TaskConfig) -> Result<Vec<Sample>> {
    let kinds = cfg.data.kinds()?;
    let rig = default_rig();
    let params = DetectionParams {
        noise_px: cfg.data.signal_noise_px,
        occl_prob: cfg.data.signal_occl_prob,
        ..DetectionParams::default()
    };
    (0..cfg.data.count)
        .map(|i| {
            let seed = derive_seed(cfg.seed, i as u64);
            let motion = synth_motion(kinds[i % kinds.len()], cfg.frames(), cfg.data.joints, seed)?;
            let signals = capture_signals(&motion, &rig, &params, derive_seed(seed, 1))?;
            Ok(Sample { motion, signals })
        })
        .collect()
}

/// Joint-level token sequences (`T x 22 x 12`) for in-betweening.
pub fn token_dataset(cfg: &TaskConfig, frames: usize) -> Result<Vec<MotionSequence>> {
    let kinds = cfg.data.kinds()?;
    (0..cfg.data.count)
        .map(|i| {
            let seed = derive_seed(cfg.seed, i as u64);
            let (bundle, _) = synth_bundle(kinds[i % kinds.len()], frames, seed)?;
            Ok(pack_joint_level(&bundle)?.to_motion()?)
        })
        .collect()
}

/// Centroid removal followed by a global scale. The centroid of each frame
/// averages its unmasked joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseNormalizer {
    pub scale: f64,
}

impl PoseNormalizer {
    /// Scale that gives the centred training poses unit RMS.
    pub fn fit(data: &[MotionSequence]) -> Result<Self> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for m in data {
            let (c, _) = normalize_centroid(m)?;
            sum += c.values().iter().map(|v| v * v).sum::<f64>();
            n += c.values().len();
        }
        if n == 0 {
            return Err(PipelineError::EmptyDataset);
        }
        let rms = (sum / n as f64).sqrt();
        Ok(Self {
            scale: if rms > 0.0 { rms } else { 1.0 },
        })
    }

    pub fn to_model(&self, m: &MotionSequence) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        let (c, centroids) = normalize_centroid_unmasked(m)?;
        Ok((c.values().iter().map(|v| v / self.scale).collect(), centroids))
    }

    pub fn from_model(&self, template: &MotionSequence, values: &[f64], centroids: &[[f64; 3]]) -> Result<MotionSequence> {
        let scaled = template.with_values(values.iter().map(|v| v * self.scale).collect())?;
        Ok(denormalize_centroid(&scaled, centroids)?)
    }
}

/// Per-feature standardization of token sequences followed by the diagonal
/// emphasis projection.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub emphasis: Vec<f64>,
}

pub const FRAME_LEN: usize = TOKENS * TOKEN_DIM;

impl TokenNormalizer {
    pub fn fit(data: &[MotionSequence], emphasis: Vec<f64>) -> Result<Self> {
        let rows: Vec<&[f64]> = data.iter().flat_map(|m| m.values().chunks(FRAME_LEN)).collect();
        if rows.is_empty() {
            return Err(PipelineError::EmptyDataset);
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..FRAME_LEN).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n).collect();
        let std = (0..FRAME_LEN)
            .map(|c| {
                let v = rows.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n;
                if v > 1e-12 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std, emphasis })
    }

    pub fn to_model(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = i % FRAME_LEN;
                self.emphasis[c] * (v - self.mean[c]) / self.std[c]
            })
            .collect()
    }

    pub fn from_model(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = i % FRAME_LEN;
                v / self.emphasis[c] * self.std[c] + self.mean[c]
            })
            .collect()
    }
}
