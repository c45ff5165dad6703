//! Motion containers and the data preparation around them.

mod io;
pub mod repr;
pub mod rotation;
pub mod skeleton;
pub mod synth;

use mmdm_tensor::Tensor;
use thiserror::Error;

pub use io::{load_motion, parse_motion, save_motion, write_motion};
pub use repr::{pack_joint_level, unpack_joint_level, ChannelBundle, JointLevelRepr, SegmentSplit};
pub use skeleton::{Skeleton, SkeletonSpec};
pub use synth::{synth_motion, SynthKind};

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("motion dimensions must be positive, got T={frames} J={joints} d={dim}")]
    EmptyDims { frames: usize, joints: usize, dim: usize },
    #[error("expected {expected} values, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("expected {expected} mask entries, got {got}")]
    MaskShape { expected: usize, got: usize },
    #[error("non-finite value at frame {frame}, joint {joint}")]
    NonFinite { frame: usize, joint: usize },
    #[error("operation needs feature dimension {expected}, got {got}")]
    WrongFeatureDim { expected: usize, got: usize },
    #[error("invalid left/right pair list: {0}")]
    InvalidPairList(String),
    #[error("channel {channel} has {got} values, expected {expected}")]
    ChannelSizeMismatch {
        channel: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown synthetic motion kind `{0}`")]
    UnknownKind(String),
    #[error("sequence too short: need at least {needed} frames, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid segment split {0}+{1}+{2} for {3} frames")]
    BadSplit(usize, usize, usize, usize),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MotionError>;

/// `T x J x d` joint features with a `T x J` mask; a `true` mask cell is
/// missing or to be generated.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    frames: usize,
    joints: usize,
    dim: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl MotionSequence {
    pub fn new(frames: usize, joints: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        let mask = vec![false; frames * joints];
        Self::with_mask(frames, joints, dim, values, mask)
    }

    pub fn with_mask(
        frames: usize,
        joints: usize,
        dim: usize,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if frames == 0 || joints == 0 || dim == 0 {
            return Err(MotionError::EmptyDims { frames, joints, dim });
        }
        let expected = frames * joints * dim;
        if values.len() != expected {
            return Err(MotionError::ValueCount {
                expected,
                got: values.len(),
            });
        }
        if mask.len() != frames * joints {
            return Err(MotionError::MaskShape {
                expected: frames * joints,
                got: mask.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let cell = i / dim;
            return Err(MotionError::NonFinite {
                frame: cell / joints,
                joint: cell % joints,
            });
        }
        Ok(Self {
            frames,
            joints,
            dim,
            values,
            mask,
        })
    }

    pub fn zeros(frames: usize, joints: usize, dim: usize) -> Result<Self> {
        Self::new(frames, joints, dim, vec![0.0; frames * joints * dim])
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [f, j, d] => Self::new(f, j, d, t.data().to_vec()),
            _ => Err(MotionError::ValueCount {
                expected: 0,
                got: t.numel(),
            }),
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frames, self.joints, self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn cell(&self, t: usize, j: usize) -> &[f64] {
        let o = (t * self.joints + j) * self.dim;
        &self.values[o..o + self.dim]
    }

    pub fn cell_mut(&mut self, t: usize, j: usize) -> &mut [f64] {
        let o = (t * self.joints + j) * self.dim;
        &mut self.values[o..o + self.dim]
    }

    pub fn is_masked(&self, t: usize, j: usize) -> bool {
        self.mask[t * self.joints + j]
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn set_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.frames * self.joints {
            return Err(MotionError::MaskShape {
                expected: self.frames * self.joints,
                got: mask.len(),
            });
        }
        self.mask = mask;
        Ok(())
    }

    /// Replaces all values, keeping shape and mask.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::with_mask(self.frames, self.joints, self.dim, values, self.mask.clone())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.frames, self.joints, self.dim], self.values.clone())
            .expect("motion values match their shape")
    }

    /// Frames `start..start + len` with their mask.
    pub fn frame_range(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames || len == 0 {
            return Err(MotionError::TooShort {
                needed: start + len,
                got: self.frames,
            });
        }
        let stride = self.joints * self.dim;
        Self::with_mask(
            len,
            self.joints,
            self.dim,
            self.values[start * stride..(start + len) * stride].to_vec(),
            self.mask[start * self.joints..(start + len) * self.joints].to_vec(),
        )
    }

    fn require_dim(&self, d: usize) -> Result<()> {
        if self.dim != d {
            return Err(MotionError::WrongFeatureDim {
                expected: d,
                got: self.dim,
            });
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(MotionError::ShapeMismatch(self.shape(), other.shape()));
        }
        Ok(())
    }
}

/// Per-frame centroids of a 3D motion.
pub type Centroids = Vec<[f64; 3]>;

/// Subtracts each frame's joint centroid.
pub fn normalize_centroid(m: &MotionSequence) -> Result<(MotionSequence, Centroids)> {
    normalize_with(m)
}

/// Like [`normalize_centroid`] but the centroid averages only unmasked
/// joints. A frame with every joint masked borrows the centroid of the
/// nearest frame that has unmasked joints, earlier frames first; with no
/// unmasked joint anywhere the centroid is the origin.
pub fn normalize_centroid_unmasked(m: &MotionSequence) -> Result<(MotionSequence, Centroids)> {
    m.require_dim(3)?;
    let own: Vec<Option<[f64; 3]>> = (0..m.frames)
        .map(|t| {
            let picked: Vec<usize> = (0..m.joints).filter(|&j| !m.is_masked(t, j)).collect();
            (!picked.is_empty()).then(|| mean_of(m, t, &picked))
        })
        .collect();
    let centroids: Centroids = (0..m.frames)
        .map(|t| {
            own[t].unwrap_or_else(|| {
                (1..m.frames)
                    .find_map(|d| {
                        let back = t.checked_sub(d).and_then(|f| own[f]);
                        back.or_else(|| own.get(t + d).copied().flatten())
                    })
                    .unwrap_or([0.0; 3])
            })
        })
        .collect();
    Ok((subtract(m, &centroids), centroids))
}

fn mean_of(m: &MotionSequence, t: usize, joints: &[usize]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for &j in joints {
        for (a, v) in c.iter_mut().zip(m.cell(t, j)) {
            *a += v;
        }
    }
    c.iter_mut().for_each(|a| *a /= joints.len() as f64);
    c
}

fn subtract(m: &MotionSequence, centroids: &[[f64; 3]]) -> MotionSequence {
    let mut out = m.clone();
    for (t, c) in centroids.iter().enumerate() {
        for j in 0..m.joints {
            for (v, a) in out.cell_mut(t, j).iter_mut().zip(c) {
                *v -= a;
            }
        }
    }
    out
}

fn normalize_with(m: &MotionSequence) -> Result<(MotionSequence, Centroids)> {
    m.require_dim(3)?;
    let all: Vec<usize> = (0..m.joints).collect();
    let centroids: Centroids = (0..m.frames).map(|t| mean_of(m, t, &all)).collect();
    Ok((subtract(m, &centroids), centroids))
}

/// Adds the per-frame centroids back.
pub fn denormalize_centroid(m: &MotionSequence, centroids: &[[f64; 3]]) -> Result<MotionSequence> {
    m.require_dim(3)?;
    if centroids.len() != m.frames {
        return Err(MotionError::ValueCount {
            expected: m.frames,
            got: centroids.len(),
        });
    }
    let mut out = m.clone();
    for (t, c) in centroids.iter().enumerate() {
        for j in 0..m.joints {
            for (v, a) in out.cell_mut(t, j).iter_mut().zip(c) {
                *v += a;
            }
        }
    }
    Ok(out)
}

/// Rotates every joint about the vertical (y) axis. With a right-handed,
/// y-up frame, `(1, 0, 0)` yawed by 90 degrees lands on `(0, 0, -1)`.
pub fn augment_rotate_yaw(m: &MotionSequence, degrees: f64) -> Result<MotionSequence> {
    m.require_dim(3)?;
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = m.clone();
    for p in out.values.chunks_exact_mut(3) {
        let (x, z) = (p[0], p[2]);
        p[0] = c * x + s * z;
        p[2] = -s * x + c * z;
    }
    Ok(out)
}

/// Mirrors the lateral (x) axis and swaps each left/right joint pair.
/// Mask bits travel with their joints.
pub fn augment_flip(m: &MotionSequence, lr_pairs: &[(usize, usize)]) -> Result<MotionSequence> {
    m.require_dim(3)?;
    let mut seen = vec![false; m.joints];
    for &(a, b) in lr_pairs {
        if a >= m.joints || b >= m.joints {
            return Err(MotionError::InvalidPairList(format!(
                "pair ({a}, {b}) out of range for {} joints",
                m.joints
            )));
        }
        if a == b || seen[a] || seen[b] {
            return Err(MotionError::InvalidPairList(format!(
                "joint reused in pair ({a}, {b})"
            )));
        }
        seen[a] = true;
        seen[b] = true;
    }
    let mut partner: Vec<usize> = (0..m.joints).collect();
    for &(a, b) in lr_pairs {
        partner[a] = b;
        partner[b] = a;
    }
    let mut out = m.clone();
    for t in 0..m.frames {
        for j in 0..m.joints {
            let src = m.cell(t, partner[j]);
            let dst = out.cell_mut(t, j);
            dst.copy_from_slice(src);
            dst[0] = -dst[0];
            out.mask[t * m.joints + j] = m.mask[t * m.joints + partner[j]];
        }
    }
    Ok(out)
}
