//! Seeded synthetic motion for tests and desk-scale experiments.
//!
//! Every joint hangs off its parent by a fixed offset rotated about a
//! per-joint axis by `A_j sin(w_j t + phi_j)`, so bone lengths stay constant
//! and trajectories are smooth. The root follows a trajectory chosen by kind.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng as _;

use super::rotation::{add, apply, rodrigues, Vec3};
use super::skeleton::Skeleton;
use super::{MotionError, MotionSequence, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    SinusoidLimb,
    LinearWalk,
    FigureEight,
}

impl FromStr for SynthKind {
    type Err = MotionError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinusoid-limb" => Ok(Self::SinusoidLimb),
            "linear-walk" => Ok(Self::LinearWalk),
            "figure-eight" => Ok(Self::FigureEight),
            other => Err(MotionError::UnknownKind(other.to_string())),
        }
    }
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [Self::SinusoidLimb, Self::LinearWalk, Self::FigureEight];

    pub fn name(self) -> &'static str {
        match self {
            Self::SinusoidLimb => "sinusoid-limb",
            Self::LinearWalk => "linear-walk",
            Self::FigureEight => "figure-eight",
        }
    }
}

/// Per-joint sampled parameters; index 0 (root) entries are unused.
#[derive(Debug, Clone)]
pub struct SynthParams {
    pub offsets: Vec<Vec3>,
    pub axes: Vec<Vec3>,
    pub amplitudes: Vec<f64>,
    pub omegas: Vec<f64>,
    pub phases: Vec<f64>,
    pub root_start: Vec3,
    /// Root velocity per frame for linear walks.
    pub root_velocity: Vec3,
    /// Radius and angular rate of the figure-eight path.
    pub loop_radius: f64,
    pub loop_rate: f64,
}

pub const PELVIS_HEIGHT: f64 = 0.92;

impl SynthParams {
    pub fn sample(skeleton: &Skeleton, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let n = skeleton.joints();
        let rest = rest_offsets(skeleton);
        let mut offsets = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        let mut amplitudes = Vec::with_capacity(n);
        let mut omegas = Vec::with_capacity(n);
        let mut phases = Vec::with_capacity(n);
        for off in rest {
            let scale = r.random_range(0.9..1.1);
            offsets.push([off[0] * scale, off[1] * scale, off[2] * scale]);
            let mut axis: Vec3 = [
                r.random_range(-1.0..1.0),
                r.random_range(-0.3..0.3),
                r.random_range(-1.0..1.0),
            ];
            if axis[0].abs() + axis[2].abs() < 0.1 {
                axis[0] = 1.0;
            }
            axes.push(axis);
            amplitudes.push(r.random_range(0.1..0.6));
            omegas.push(r.random_range(0.05..0.25));
            phases.push(r.random_range(0.0..2.0 * PI));
        }
        let heading = r.random_range(0.0..2.0 * PI);
        let speed = r.random_range(0.01..0.03);
        Self {
            offsets,
            axes,
            amplitudes,
            omegas,
            phases,
            root_start: [r.random_range(-0.5..0.5), PELVIS_HEIGHT, r.random_range(-0.5..0.5)],
            root_velocity: [speed * heading.cos(), 0.0, speed * heading.sin()],
            loop_radius: r.random_range(0.5..1.5),
            loop_rate: r.random_range(0.02..0.06),
        }
    }

    pub fn root(&self, kind: SynthKind, t: f64) -> Vec3 {
        let s = self.root_start;
        match kind {
            SynthKind::SinusoidLimb => s,
            SynthKind::LinearWalk => add(
                s,
                [
                    self.root_velocity[0] * t,
                    0.0,
                    self.root_velocity[2] * t,
                ],
            ),
            SynthKind::FigureEight => {
                let a = self.loop_rate * t;
                [
                    s[0] + self.loop_radius * a.sin(),
                    s[1],
                    s[2] + self.loop_radius * a.sin() * a.cos(),
                ]
            }
        }
    }

    /// Angle of joint `j` relative to its parent at time `t`.
    pub fn angle(&self, j: usize, t: f64) -> f64 {
        self.amplitudes[j] * (self.omegas[j] * t + self.phases[j]).sin()
    }

    /// World position of joint `j` relative to its parent at time `t`.
    pub fn bone(&self, j: usize, t: f64) -> Vec3 {
        apply(&rodrigues(self.axes[j], self.angle(j, t)), self.offsets[j])
    }
}

/// A plausible standing pose for the named layouts, a fan of downward bones
/// otherwise.
fn rest_offsets(s: &Skeleton) -> Vec<Vec3> {
    match s.joints() {
        17 => vec![
            [0.0, 0.0, 0.0],
            [-0.13, 0.0, 0.0],
            [0.0, -0.44, 0.0],
            [0.0, -0.44, 0.0],
            [0.13, 0.0, 0.0],
            [0.0, -0.44, 0.0],
            [0.0, -0.44, 0.0],
            [0.0, 0.23, 0.0],
            [0.0, 0.25, 0.0],
            [0.0, 0.11, 0.0],
            [0.0, 0.11, 0.0],
            [0.15, -0.02, 0.0],
            [0.0, -0.28, 0.0],
            [0.0, -0.25, 0.0],
            [-0.15, -0.02, 0.0],
            [0.0, -0.28, 0.0],
            [0.0, -0.25, 0.0],
        ],
        22 => vec![
            [0.0, 0.0, 0.0],
            [0.06, -0.09, 0.0],
            [-0.06, -0.09, 0.0],
            [0.0, 0.11, 0.0],
            [0.04, -0.38, 0.0],
            [-0.04, -0.38, 0.0],
            [0.0, 0.14, 0.0],
            [0.0, -0.40, -0.04],
            [0.0, -0.40, -0.04],
            [0.0, 0.06, 0.0],
            [0.0, -0.06, 0.12],
            [0.0, -0.06, 0.12],
            [0.0, 0.22, 0.0],
            [0.08, 0.12, 0.0],
            [-0.08, 0.12, 0.0],
            [0.0, 0.08, 0.05],
            [0.12, 0.04, 0.0],
            [-0.12, 0.04, 0.0],
            [0.26, 0.0, 0.0],
            [-0.26, 0.0, 0.0],
            [0.25, 0.0, 0.0],
            [-0.25, 0.0, 0.0],
        ],
        n => (0..n)
            .map(|j| {
                if j == 0 {
                    [0.0; 3]
                } else {
                    let a = j as f64 * 0.7;
                    [0.1 * a.cos(), -0.2, 0.1 * a.sin()]
                }
            })
            .collect(),
    }
}

/// Generates a `T x J x 3` motion. Joint 0 is the root.
pub fn synth_motion(kind: SynthKind, frames: usize, joints: usize, seed: u64) -> Result<MotionSequence> {
    let skeleton = Skeleton::for_joints(joints);
    let params = SynthParams::sample(&skeleton, seed);
    synth_with(kind, frames, &skeleton, &params)
}

pub fn synth_with(
    kind: SynthKind,
    frames: usize,
    skeleton: &Skeleton,
    params: &SynthParams,
) -> Result<MotionSequence> {
    if frames < 2 {
        return Err(MotionError::TooShort { needed: 2, got: frames });
    }
    let joints = skeleton.joints();
    let mut values = Vec::with_capacity(frames * joints * 3);
    let mut pos = vec![[0.0; 3]; joints];
    for t in 0..frames {
        let tf = t as f64;
        for j in 0..joints {
            pos[j] = match skeleton.parents[j] {
                None => params.root(kind, tf),
                Some(p) => add(pos[p], params.bone(j, tf)),
            };
            values.extend_from_slice(&pos[j]);
        }
    }
    MotionSequence::new(frames, joints, 3, values)
}

/// Parses a kind name, as accepted on the command line.
pub fn parse_kind(s: &str) -> Result<SynthKind> {
    s.parse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::rotation::{norm, sub};

    #[test]
    fn deterministic() {
        for kind in SynthKind::ALL {
            let a = synth_motion(kind, 12, 17, 5).unwrap();
            let b = synth_motion(kind, 12, 17, 5).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, synth_motion(kind, 12, 17, 6).unwrap());
        }
    }

    #[test]
    fn unknown_kind() {
        assert!(matches!(parse_kind("moonwalk"), Err(MotionError::UnknownKind(_))));
        assert_eq!(parse_kind("figure-eight").unwrap(), SynthKind::FigureEight);
    }

    #[test]
    fn needs_two_frames() {
        assert!(synth_motion(SynthKind::LinearWalk, 1, 17, 0).is_err());
    }

    #[test]
    fn bone_lengths_constant() {
        let s = Skeleton::smpl22();
        let m = synth_motion(SynthKind::FigureEight, 40, 22, 3).unwrap();
        for &(p, c) in &s.limbs {
            let l0 = norm(sub(m.cell(0, c).try_into().unwrap(), m.cell(0, p).try_into().unwrap()));
            for t in 1..40 {
                let l = norm(sub(m.cell(t, c).try_into().unwrap(), m.cell(t, p).try_into().unwrap()));
                assert!((l - l0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn linear_walk_constant_step() {
        let m = synth_motion(SynthKind::LinearWalk, 20, 17, 2).unwrap();
        let d0 = sub(m.cell(1, 0).try_into().unwrap(), m.cell(0, 0).try_into().unwrap());
        for t in 1..19 {
            let d = sub(m.cell(t + 1, 0).try_into().unwrap(), m.cell(t, 0).try_into().unwrap());
            for k in 0..3 {
                assert!((d[k] - d0[k]).abs() < 1e-12);
            }
        }
    }
}
