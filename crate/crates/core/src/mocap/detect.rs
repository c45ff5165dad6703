use rand::seq::SliceRandom;
use rand::Rng as _;

use super::camera::Camera;
use super::{MocapError, Point2, Result};
use crate::motion::MotionSequence;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionParams {
    /// Standard deviation of the per-coordinate pixel noise.
    pub noise_px: f64,
    /// Probability that a (view, person, frame, joint) is occluded.
    pub occl_prob: f64,
    /// Per-joint overrides of `occl_prob`, as (joint, probability).
    pub joint_occl: Vec<(usize, f64)>,
    /// Shuffle detection order within each view and frame.
    pub shuffle: bool,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            noise_px: 0.0,
            occl_prob: 0.0,
            joint_occl: Vec::new(),
            shuffle: true,
        }
    }
}

/// 2D detections. Slot `n` of view `v` at frame `t` holds the detection of
/// person `identity[(v * T + t) * N + n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub people: usize,
    pub views: usize,
    pub frames: usize,
    pub joints: usize,
    /// `N x V x T x J x 2`, zero where invisible.
    pub p: Vec<f64>,
    /// `N x V x T x J`
    pub rho: Vec<f64>,
    pub identity: Vec<usize>,
}

impl DetectionSet {
    fn cell(&self, n: usize, v: usize, t: usize, j: usize) -> usize {
        ((n * self.views + v) * self.frames + t) * self.joints + j
    }

    pub fn point(&self, n: usize, v: usize, t: usize, j: usize) -> Point2 {
        let c = self.cell(n, v, t, j);
        [self.p[2 * c], self.p[2 * c + 1]]
    }

    pub fn confidence(&self, n: usize, v: usize, t: usize, j: usize) -> f64 {
        self.rho[self.cell(n, v, t, j)]
    }

    pub fn visible(&self, n: usize, v: usize, t: usize, j: usize) -> bool {
        self.confidence(n, v, t, j) > 0.0
    }

    pub fn identity_of(&self, n: usize, v: usize, t: usize) -> usize {
        self.identity[(v * self.frames + t) * self.people + n]
    }
}

/// Projects every person into every view with Gaussian pixel noise and
/// random occlusion. Visible joints get `rho = exp(-|noise| / noise_px)`
/// (1 for noiseless detections); occluded, off-image or behind-camera
/// joints get `rho = 0`.
pub fn simulate_detections(
    scene: &[MotionSequence],
    rig: &[Camera],
    params: &DetectionParams,
    seed: u64,
) -> Result<DetectionSet> {
    let first = scene
        .first()
        .ok_or_else(|| MocapError::Shape("scene has no people".into()))?;
    let (frames, joints) = (first.frames(), first.joints());
    if scene.iter().any(|m| m.frames() != frames || m.joints() != joints || m.dim() != 3) {
        return Err(MocapError::Shape("people must share T, J and d = 3".into()));
    }
    let (people, views) = (scene.len(), rig.len());
    let mut occl = vec![params.occl_prob; joints];
    for &(j, p) in &params.joint_occl {
        if j < joints {
            occl[j] = p;
        }
    }
    let mut r = rng::seeded(seed);
    let cells = people * views * frames * joints;
    let mut out = DetectionSet {
        people,
        views,
        frames,
        joints,
        p: vec![0.0; cells * 2],
        rho: vec![0.0; cells],
        identity: Vec::with_capacity(views * frames * people),
    };
    for (v, cam) in rig.iter().enumerate() {
        for t in 0..frames {
            let mut order: Vec<usize> = (0..people).collect();
            if params.shuffle {
                order.shuffle(&mut r);
            }
            for (slot, &person) in order.iter().enumerate() {
                for j in 0..joints {
                    let x = scene[person].cell(t, j);
                    let n = [rng::normal(&mut r) * params.noise_px, rng::normal(&mut r) * params.noise_px];
                    let occluded = r.random::<f64>() < occl[j];
                    let proj = cam.project([x[0], x[1], x[2]]);
                    let c = out.cell(slot, v, t, j);
                    if let (Ok(p), false) = (proj, occluded) {
                        let q = [p[0] + n[0], p[1] + n[1]];
                        if cam.in_image(q) {
                            out.p[2 * c] = q[0];
                            out.p[2 * c + 1] = q[1];
                            out.rho[c] = if params.noise_px > 0.0 {
                                (-(n[0].hypot(n[1])) / params.noise_px).exp().max(f64::MIN_POSITIVE)
                            } else {
                                1.0
                            };
                        }
                    }
                }
            }
            out.identity.extend(order);
        }
    }
    Ok(out)
}
