//! Pose-level channel bundles and the `T x 22 x 12` joint-level packing.
//!
//! Packing map, per frame:
//!
//! | token | slots 0-5 | slots 6-8 | slots 9-11 |
//! |-------|-----------|-----------|------------|
//! | 0 | root rotation velocity | angular vel, x vel, z vel | height, pad, pad |
//! | j = 1..21 | rotation of j (6D) | local position of j | velocity of j |
//!
//! The four foot-contact labels and the root joint's own velocity do not fit
//! the 12 slots and live in a side record of 7 values per frame:
//! `[contact0..contact3, root_vel_x, root_vel_y, root_vel_z]`.

use super::rotation::{add, from_6d, rodrigues, sub, to_6d, Vec3};
use super::skeleton::Skeleton;
use super::synth::{SynthKind, SynthParams};
use super::{MotionError, MotionSequence, Result};

pub const TOKENS: usize = 22;
pub const TOKEN_DIM: usize = 12;
pub const SIDE_DIM: usize = 7;
/// Channel count of one pose-level frame.
pub const POSE_DIM: usize = 269;

/// Root-token slots that carry the four root scalars.
pub const ROOT_SCALAR_SLOTS: std::ops::Range<usize> = 6..10;
pub const ROOT_PAD_SLOTS: std::ops::Range<usize> = 10..12;

/// Per-frame channels of a 22-joint pose-level representation. All vectors
/// are frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBundle {
    pub frames: usize,
    /// `T x 6`
    pub root_rot_vel: Vec<f64>,
    /// `T x 4`: angular velocity, x velocity, z velocity, height.
    pub root_scalars: Vec<f64>,
    /// `T x 21 x 3`, joints 1..21.
    pub local_pos: Vec<f64>,
    /// `T x 22 x 3`, all joints.
    pub joint_vel: Vec<f64>,
    /// `T x 21 x 6`, joints 1..21.
    pub joint_rot: Vec<f64>,
    /// `T x 4`
    pub contacts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointLevelRepr {
    pub frames: usize,
    /// `T x 22 x 12`
    pub values: Vec<f64>,
    /// `T x 7`
    pub side: Vec<f64>,
}

impl ChannelBundle {
    pub fn zeros(frames: usize) -> Self {
        Self {
            frames,
            root_rot_vel: vec![0.0; frames * 6],
            root_scalars: vec![0.0; frames * 4],
            local_pos: vec![0.0; frames * 21 * 3],
            joint_vel: vec![0.0; frames * 22 * 3],
            joint_rot: vec![0.0; frames * 21 * 6],
            contacts: vec![0.0; frames * 4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.frames;
        let checks: [(&'static str, usize, usize); 6] = [
            ("root_rot_vel", t * 6, self.root_rot_vel.len()),
            ("root_scalars", t * 4, self.root_scalars.len()),
            ("local_pos", t * 21 * 3, self.local_pos.len()),
            ("joint_vel", t * 22 * 3, self.joint_vel.len()),
            ("joint_rot", t * 21 * 6, self.joint_rot.len()),
            ("contacts", t * 4, self.contacts.len()),
        ];
        for (channel, expected, got) in checks {
            if expected != got {
                return Err(MotionError::ChannelSizeMismatch {
                    channel,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    /// One frame laid out as the 269-value pose vector
    /// `[rv, ra, rx, rz, ry, jp, jv, jr, cf]`.
    pub fn pose_vector(&self, t: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(POSE_DIM);
        v.extend_from_slice(&self.root_rot_vel[t * 6..t * 6 + 6]);
        v.extend_from_slice(&self.root_scalars[t * 4..t * 4 + 4]);
        v.extend_from_slice(&self.local_pos[t * 63..t * 63 + 63]);
        v.extend_from_slice(&self.joint_vel[t * 66..t * 66 + 66]);
        v.extend_from_slice(&self.joint_rot[t * 126..t * 126 + 126]);
        v.extend_from_slice(&self.contacts[t * 4..t * 4 + 4]);
        v
    }

    pub fn scalar_count(&self) -> usize {
        self.frames * POSE_DIM
    }

    fn all_values(&self) -> impl Iterator<Item = &f64> {
        self.root_rot_vel
            .iter()
            .chain(&self.root_scalars)
            .chain(&self.local_pos)
            .chain(&self.joint_vel)
            .chain(&self.joint_rot)
            .chain(&self.contacts)
    }

    pub fn nonzero_count(&self) -> usize {
        self.all_values().filter(|v| **v != 0.0).count()
    }
}

impl JointLevelRepr {
    pub fn token(&self, t: usize, j: usize) -> &[f64] {
        let o = (t * TOKENS + j) * TOKEN_DIM;
        &self.values[o..o + TOKEN_DIM]
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().chain(&self.side).filter(|v| **v != 0.0).count()
    }

    /// The 12-slot tokens as a motion sequence (side record dropped).
    pub fn to_motion(&self) -> Result<MotionSequence> {
        MotionSequence::new(self.frames, TOKENS, TOKEN_DIM, self.values.clone())
    }

    pub fn from_motion(m: &MotionSequence, side: Vec<f64>) -> Result<Self> {
        if m.joints() != TOKENS || m.dim() != TOKEN_DIM {
            return Err(MotionError::WrongFeatureDim {
                expected: TOKEN_DIM,
                got: m.dim(),
            });
        }
        if side.len() != m.frames() * SIDE_DIM {
            return Err(MotionError::ChannelSizeMismatch {
                channel: "side",
                expected: m.frames() * SIDE_DIM,
                got: side.len(),
            });
        }
        Ok(Self {
            frames: m.frames(),
            values: m.values().to_vec(),
            side,
        })
    }
}

pub fn pack_joint_level(b: &ChannelBundle) -> Result<JointLevelRepr> {
    b.validate()?;
    let t_len = b.frames;
    let mut values = vec![0.0; t_len * TOKENS * TOKEN_DIM];
    let mut side = vec![0.0; t_len * SIDE_DIM];
    for t in 0..t_len {
        let base = t * TOKENS * TOKEN_DIM;
        values[base..base + 6].copy_from_slice(&b.root_rot_vel[t * 6..t * 6 + 6]);
        values[base + 6..base + 10].copy_from_slice(&b.root_scalars[t * 4..t * 4 + 4]);
        for j in 1..TOKENS {
            let o = base + j * TOKEN_DIM;
            let k = t * 21 + (j - 1);
            values[o..o + 6].copy_from_slice(&b.joint_rot[k * 6..k * 6 + 6]);
            values[o + 6..o + 9].copy_from_slice(&b.local_pos[k * 3..k * 3 + 3]);
            let v = (t * 22 + j) * 3;
            values[o + 9..o + 12].copy_from_slice(&b.joint_vel[v..v + 3]);
        }
        side[t * SIDE_DIM..t * SIDE_DIM + 4].copy_from_slice(&b.contacts[t * 4..t * 4 + 4]);
        let v = t * 22 * 3;
        side[t * SIDE_DIM + 4..t * SIDE_DIM + 7].copy_from_slice(&b.joint_vel[v..v + 3]);
    }
    Ok(JointLevelRepr {
        frames: t_len,
        values,
        side,
    })
}

pub fn unpack_joint_level(r: &JointLevelRepr) -> Result<ChannelBundle> {
    let t_len = r.frames;
    if r.values.len() != t_len * TOKENS * TOKEN_DIM {
        return Err(MotionError::ChannelSizeMismatch {
            channel: "values",
            expected: t_len * TOKENS * TOKEN_DIM,
            got: r.values.len(),
        });
    }
    if r.side.len() != t_len * SIDE_DIM {
        return Err(MotionError::ChannelSizeMismatch {
            channel: "side",
            expected: t_len * SIDE_DIM,
            got: r.side.len(),
        });
    }
    let mut b = ChannelBundle::zeros(t_len);
    for t in 0..t_len {
        let base = t * TOKENS * TOKEN_DIM;
        b.root_rot_vel[t * 6..t * 6 + 6].copy_from_slice(&r.values[base..base + 6]);
        b.root_scalars[t * 4..t * 4 + 4].copy_from_slice(&r.values[base + 6..base + 10]);
        for j in 1..TOKENS {
            let o = base + j * TOKEN_DIM;
            let k = t * 21 + (j - 1);
            b.joint_rot[k * 6..k * 6 + 6].copy_from_slice(&r.values[o..o + 6]);
            b.local_pos[k * 3..k * 3 + 3].copy_from_slice(&r.values[o + 6..o + 9]);
            let v = (t * 22 + j) * 3;
            b.joint_vel[v..v + 3].copy_from_slice(&r.values[o + 9..o + 12]);
        }
        b.contacts[t * 4..t * 4 + 4].copy_from_slice(&r.side[t * SIDE_DIM..t * SIDE_DIM + 4]);
        let v = t * 22 * 3;
        b.joint_vel[v..v + 3].copy_from_slice(&r.side[t * SIDE_DIM + 4..t * SIDE_DIM + 7]);
    }
    Ok(b)
}

/// Foot joints of the 22-joint layout used for contact labels.
pub const FEET: [usize; 4] = [7, 10, 8, 11];

/// Builds a channel bundle from a synthetic 22-joint motion. The root is not
/// rotated, so its rotation velocity is the identity and its angular velocity
/// is zero; joint rotations come from the generator's bone rotations.
pub fn synth_bundle(kind: SynthKind, frames: usize, seed: u64) -> Result<(ChannelBundle, MotionSequence)> {
    let skeleton = Skeleton::smpl22();
    let params = SynthParams::sample(&skeleton, seed);
    let positions = super::synth::synth_with(kind, frames, &skeleton, &params)?;
    let mut b = ChannelBundle::zeros(frames);
    let identity = to_6d(&rodrigues([1.0, 0.0, 0.0], 0.0));
    let floor = positions
        .values()
        .chunks(3)
        .map(|p| p[1])
        .fold(f64::INFINITY, f64::min);
    for t in 0..frames {
        let root: Vec3 = positions.cell(t, 0).try_into().expect("3d");
        let prev_root: Vec3 = positions.cell(t.saturating_sub(1), 0).try_into().expect("3d");
        b.root_rot_vel[t * 6..t * 6 + 6].copy_from_slice(&identity);
        b.root_scalars[t * 4 + 1] = root[0] - prev_root[0];
        b.root_scalars[t * 4 + 2] = root[2] - prev_root[2];
        b.root_scalars[t * 4 + 3] = root[1];
        for j in 0..TOKENS {
            let p: Vec3 = positions.cell(t, j).try_into().expect("3d");
            let q: Vec3 = positions.cell(t.saturating_sub(1), j).try_into().expect("3d");
            let v = sub(p, q);
            b.joint_vel[(t * 22 + j) * 3..(t * 22 + j) * 3 + 3].copy_from_slice(&v);
            if j > 0 {
                let k = t * 21 + j - 1;
                let local = [p[0] - root[0], p[1], p[2] - root[2]];
                b.local_pos[k * 3..k * 3 + 3].copy_from_slice(&local);
                let r = rodrigues(params.axes[j], params.angle(j, t as f64));
                b.joint_rot[k * 6..k * 6 + 6].copy_from_slice(&to_6d(&r));
            }
        }
        for (c, &f) in FEET.iter().enumerate() {
            let p = positions.cell(t, f);
            let v = &b.joint_vel[(t * 22 + f) * 3..(t * 22 + f) * 3 + 3];
            let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            b.contacts[t * 4 + c] = if speed < 0.02 && p[1] < floor + 0.05 { 1.0 } else { 0.0 };
        }
    }
    Ok((b, positions))
}

/// Global joint positions recovered from a joint-level tensor (`T x 22 x 12`).
/// The root's horizontal position is the running sum of its velocities,
/// starting from `origin`.
pub fn positions_from_tokens(m: &MotionSequence, origin: [f64; 2]) -> Result<MotionSequence> {
    if m.joints() != TOKENS || m.dim() != TOKEN_DIM {
        return Err(MotionError::WrongFeatureDim {
            expected: TOKEN_DIM,
            got: m.dim(),
        });
    }
    let mut out = Vec::with_capacity(m.frames() * TOKENS * 3);
    let (mut x, mut z) = (origin[0], origin[1]);
    for t in 0..m.frames() {
        let r = m.cell(t, 0);
        if t > 0 {
            x += r[7];
            z += r[8];
        }
        out.extend_from_slice(&[x, r[9], z]);
        for j in 1..TOKENS {
            let c = m.cell(t, j);
            out.extend_from_slice(&add([x, 0.0, z], [c[6], c[7], c[8]]));
        }
    }
    MotionSequence::new(m.frames(), TOKENS, 3, out)
}

/// Unit quaternions `(w, x, y, z)` of joints 1..21, from the 6D slots.
pub fn rotations_from_tokens(m: &MotionSequence) -> Vec<[f64; 4]> {
    let mut out = Vec::with_capacity(m.frames() * (TOKENS - 1));
    for t in 0..m.frames() {
        for j in 1..TOKENS {
            let c = m.cell(t, j);
            let six: [f64; 6] = c[..6].try_into().expect("6 slots");
            out.push(super::rotation::mat_to_quat(&from_6d(&six)));
        }
    }
    out
}

/// Splits `T` frames into preceding, transition and succeeding parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentSplit {
    pub preceding: usize,
    pub transition: usize,
    pub succeeding: usize,
}

impl SegmentSplit {
    pub fn new(preceding: usize, transition: usize, succeeding: usize, total: usize) -> Result<Self> {
        if preceding == 0 || transition == 0 || succeeding == 0 || preceding + transition + succeeding != total {
            return Err(MotionError::BadSplit(preceding, transition, succeeding, total));
        }
        Ok(Self {
            preceding,
            transition,
            succeeding,
        })
    }

    pub fn total(&self) -> usize {
        self.preceding + self.transition + self.succeeding
    }

    pub fn transition_range(&self) -> std::ops::Range<usize> {
        self.preceding..self.preceding + self.transition
    }

    pub fn is_boundary(&self, t: usize) -> bool {
        !self.transition_range().contains(&t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_bundle_packs_to_zero() {
        let r = pack_joint_level(&ChannelBundle::zeros(3)).unwrap();
        assert!(r.values.iter().chain(&r.side).all(|v| *v == 0.0));
        assert_eq!(r.values.len(), 3 * 22 * 12);
    }

    #[test]
    fn size_mismatch_is_reported() {
        let mut b = ChannelBundle::zeros(2);
        b.contacts.pop();
        assert!(matches!(
            pack_joint_level(&b),
            Err(MotionError::ChannelSizeMismatch { channel: "contacts", .. })
        ));
    }

    #[test]
    fn pose_vector_is_269() {
        assert_eq!(ChannelBundle::zeros(1).pose_vector(0).len(), POSE_DIM);
        assert_eq!(6 + 4 + 21 * 3 + 22 * 3 + 21 * 6 + 4, POSE_DIM);
    }

    #[test]
    fn synth_bundle_positions_recoverable() {
        let (b, pos) = synth_bundle(SynthKind::LinearWalk, 16, 4).unwrap();
        let r = pack_joint_level(&b).unwrap();
        let m = r.to_motion().unwrap();
        let root = pos.cell(0, 0);
        let back = positions_from_tokens(&m, [root[0], root[2]]).unwrap();
        for (a, b) in back.values().iter().zip(pos.values()) {
            assert!((a - b).abs() < 1e-9);
        }
        let q = rotations_from_tokens(&m);
        for q in q {
            let n: f64 = q.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn split_validation() {
        assert!(SegmentSplit::new(10, 30, 10, 50).is_ok());
        assert!(SegmentSplit::new(0, 30, 20, 50).is_err());
        assert!(SegmentSplit::new(10, 30, 11, 50).is_err());
    }
}
