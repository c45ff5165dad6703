//! Evaluation metrics. Positions are in meters; MPJPE and acceleration
//! errors are reported in millimeters.

mod npss;
mod report;

use thiserror::Error;

use crate::motion::{MotionSequence, SkeletonSpec};

pub use npss::{npss, power_spectrum};
pub use report::{config_hash, Metric, MetricReport, Unit};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("expected feature dimension {expected}, got {got}")]
    FeatureDim { expected: usize, got: usize },
    #[error("limb {parent}-{child} has zero length at frame {frame}")]
    ZeroLengthLimb { parent: usize, child: usize, frame: usize },
    #[error("skeleton does not fit {joints} joints: {reason}")]
    InvalidSkeleton { joints: usize, reason: String },
    #[error("empty joint set")]
    EmptySets,
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("need at least {needed} frames, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("quaternion at frame {frame}, joint {joint} has norm {norm}")]
    NotUnitQuaternion { frame: usize, joint: usize, norm: f64 },
    #[error("metric `{name}` = {value} is outside its range")]
    OutOfRange { name: String, value: f64 },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("report format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Correct-detection threshold for precision and recall, in meters.
pub const PR_THRESHOLD_M: f64 = 0.2;
const UNIT_QUAT_TOL: f64 = 1e-6;
const MM: f64 = 1000.0;

fn same_shape(pred: &MotionSequence, gt: &MotionSequence) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(MetricError::ShapeMismatch(pred.shape(), gt.shape()));
    }
    Ok(())
}

fn need_dim(m: &MotionSequence, d: usize) -> Result<()> {
    if m.dim() != d {
        return Err(MetricError::FeatureDim {
            expected: d,
            got: m.dim(),
        });
    }
    Ok(())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Percentage of limbs whose two endpoint errors are both strictly below
/// half the ground-truth limb length, over all limbs and frames.
pub fn pcp(pred: &MotionSequence, gt: &MotionSequence, skeleton: &SkeletonSpec) -> Result<f64> {
    same_shape(pred, gt)?;
    need_dim(gt, 3)?;
    let joints = gt.joints();
    let bad = |reason: String| MetricError::InvalidSkeleton { joints, reason };
    if skeleton.limbs.is_empty() {
        return Err(bad("no limbs".into()));
    }
    if let Some(&(p, c)) = skeleton.limbs.iter().find(|(p, c)| *p >= joints || *c >= joints) {
        return Err(bad(format!("limb {p}-{c} out of range")));
    }
    let mut correct = 0usize;
    for t in 0..gt.frames() {
        for &(p, c) in &skeleton.limbs {
            let len = dist(gt.cell(t, p), gt.cell(t, c));
            if len <= 0.0 {
                return Err(MetricError::ZeroLengthLimb {
                    parent: p,
                    child: c,
                    frame: t,
                });
            }
            let half = 0.5 * len;
            if dist(pred.cell(t, p), gt.cell(t, p)) < half && dist(pred.cell(t, c), gt.cell(t, c)) < half {
                correct += 1;
            }
        }
    }
    Ok(100.0 * correct as f64 / (gt.frames() * skeleton.limbs.len()) as f64)
}

/// Mean per-joint position error in millimeters.
pub fn mpjpe(pred: &MotionSequence, gt: &MotionSequence) -> Result<f64> {
    same_shape(pred, gt)?;
    need_dim(gt, 3)?;
    let cells = gt.frames() * gt.joints();
    let total: f64 = pred.values().chunks(3).zip(gt.values().chunks(3)).map(|(a, b)| dist(a, b)).sum();
    Ok(MM * total / cells as f64)
}

/// MPJPE restricted to cells selected by `cells` (frame-major).
pub fn mpjpe_on(pred: &MotionSequence, gt: &MotionSequence, cells: &[bool]) -> Result<f64> {
    same_shape(pred, gt)?;
    need_dim(gt, 3)?;
    if cells.len() != gt.frames() * gt.joints() {
        return Err(MetricError::EmptySets);
    }
    let picked: Vec<f64> = pred
        .values()
        .chunks(3)
        .zip(gt.values().chunks(3))
        .zip(cells)
        .filter(|(_, &keep)| keep)
        .map(|((a, b), _)| dist(a, b))
        .collect();
    if picked.is_empty() {
        return Err(MetricError::EmptySets);
    }
    Ok(MM * picked.iter().sum::<f64>() / picked.len() as f64)
}

/// Mean norm of the difference of second finite differences, in
/// millimeters per frame squared.
pub fn accel_error(pred: &MotionSequence, gt: &MotionSequence) -> Result<f64> {
    same_shape(pred, gt)?;
    need_dim(gt, 3)?;
    let (frames, joints) = (gt.frames(), gt.joints());
    if frames < 3 {
        return Err(MetricError::TooShort { needed: 3, got: frames });
    }
    let accel = |m: &MotionSequence, t: usize, j: usize, k: usize| {
        m.cell(t + 1, j)[k] - 2.0 * m.cell(t, j)[k] + m.cell(t - 1, j)[k]
    };
    let mut total = 0.0;
    for t in 1..frames - 1 {
        for j in 0..joints {
            let d: Vec<f64> = (0..3).map(|k| accel(pred, t, j, k) - accel(gt, t, j, k)).collect();
            total += d.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
    }
    Ok(MM * total / ((frames - 2) * joints) as f64)
}

/// Precision over estimated joints and recall over ground-truth joints, in
/// percent. `pred[i]` is the estimate corresponding to `gt[i]`, if any; a
/// joint is correct when its error is strictly below `threshold`.
pub fn precision_recall(pred: &[Option<[f64; 3]>], gt: &[[f64; 3]], threshold: f64) -> Result<(f64, f64)> {
    if !(threshold > 0.0) {
        return Err(MetricError::InvalidThreshold(threshold));
    }
    if gt.is_empty() || pred.len() != gt.len() {
        return Err(MetricError::EmptySets);
    }
    let estimated = pred.iter().filter(|p| p.is_some()).count();
    let correct = pred
        .iter()
        .zip(gt)
        .filter(|(p, g)| p.is_some_and(|p| dist(&p, *g) < threshold))
        .count();
    let precision = if estimated == 0 {
        0.0
    } else {
        100.0 * correct as f64 / estimated as f64
    };
    Ok((precision, 100.0 * correct as f64 / gt.len() as f64))
}

/// Mean over frames of the L2 norm of the whole-pose positional difference.
pub fn l2p(pred: &MotionSequence, gt: &MotionSequence) -> Result<f64> {
    same_shape(pred, gt)?;
    let stride = gt.joints() * gt.dim();
    let total: f64 = pred
        .values()
        .chunks(stride)
        .zip(gt.values().chunks(stride))
        .map(|(a, b)| dist(a, b))
        .sum();
    Ok(total / gt.frames() as f64)
}

fn check_unit(m: &MotionSequence) -> Result<()> {
    for t in 0..m.frames() {
        for j in 0..m.joints() {
            let norm = m.cell(t, j).iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_QUAT_TOL {
                return Err(MetricError::NotUnitQuaternion { frame: t, joint: j, norm });
            }
        }
    }
    Ok(())
}

/// Like [`l2p`] on `(w, x, y, z)` quaternions, taking for each joint the
/// closer of `q` and `-q`.
pub fn l2q(pred: &MotionSequence, gt: &MotionSequence) -> Result<f64> {
    same_shape(pred, gt)?;
    need_dim(gt, 4)?;
    check_unit(pred)?;
    check_unit(gt)?;
    let mut total = 0.0;
    for t in 0..gt.frames() {
        let mut sq = 0.0;
        for j in 0..gt.joints() {
            let (a, b) = (pred.cell(t, j), gt.cell(t, j));
            let minus: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            let plus: f64 = a.iter().zip(b).map(|(x, y)| (x + y) * (x + y)).sum();
            sq += minus.min(plus);
        }
        total += sq.sqrt();
    }
    Ok(total / gt.frames() as f64)
}
