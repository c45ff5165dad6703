use super::config::TaskConfig;
use super::{PipelineError, Result};
use crate::metrics::{accel_error, l2p, l2q, mpjpe, npss, pcp, precision_recall, MetricError, MetricReport, PR_THRESHOLD_M};
use crate::motion::{load_motion, MotionSequence, Skeleton};

pub const METRICS: [&str; 8] = ["accel", "l2p", "l2q", "mpjpe", "npss", "pcp", "precision", "recall"];

fn default_metrics(gt: &MotionSequence) -> Vec<&'static str> {
    match gt.dim() {
        3 => {
            let mut v = vec!["l2p", "mpjpe", "npss", "pcp", "precision", "recall"];
            if gt.frames() >= 3 {
                v.push("accel");
            }
            v
        }
        4 => vec!["l2p", "l2q", "npss"],
        _ => vec!["l2p", "npss"],
    }
}

/// Computes the named metrics of `pred` against `gt`. Cells masked in
/// `pred` count as missing estimates for precision and recall.
pub fn evaluate(pred: &MotionSequence, gt: &MotionSequence, names: &[String]) -> Result<MetricReport> {
    pred.check_same_shape(gt)?;
    let names: Vec<String> = if names.is_empty() {
        default_metrics(gt).into_iter().map(String::from).collect()
    } else {
        names.to_vec()
    };
    let mut report = MetricReport::default();
    let mut pr = None;
    for name in &names {
        let v = match name.as_str() {
            "accel" => accel_error(pred, gt)?,
            "l2p" => l2p(pred, gt)?,
            "l2q" => l2q(pred, gt)?,
            "mpjpe" => mpjpe(pred, gt)?,
            "npss" => npss(pred, gt)?,
            "pcp" => pcp(pred, gt, &Skeleton::for_joints(gt.joints()))?,
            "precision" | "recall" => {
                let (p, r) = match pr {
                    Some(v) => v,
                    None => {
                        let v = pair_precision_recall(pred, gt)?;
                        pr = Some(v);
                        v
                    }
                };
                if name == "precision" {
                    p
                } else {
                    r
                }
            }
            other => return Err(MetricError::UnknownMetric(other.to_string()).into()),
        };
        report.set(name, v)?;
    }
    Ok(report)
}

fn pair_precision_recall(pred: &MotionSequence, gt: &MotionSequence) -> Result<(f64, f64)> {
    if gt.dim() != 3 {
        return Err(MetricError::FeatureDim { expected: 3, got: gt.dim() }.into());
    }
    let mut est = Vec::new();
    let mut truth = Vec::new();
    for t in 0..gt.frames() {
        for j in 0..gt.joints() {
            est.push((!pred.is_masked(t, j)).then(|| pred.cell(t, j).try_into().expect("3d")));
            truth.push(gt.cell(t, j).try_into().expect("3d"));
        }
    }
    Ok(precision_recall(&est, &truth, PR_THRESHOLD_M)?)
}

pub fn run_eval(cfg: &TaskConfig) -> Result<MetricReport> {
    let (Some(pred), Some(gt)) = (&cfg.eval.pred, &cfg.eval.gt) else {
        return Err(PipelineError::Config("eval needs eval.pred and eval.gt".into()));
    };
    let mut report = evaluate(&load_motion(pred)?, &load_motion(gt)?, &cfg.eval.metrics)?;
    report.seed = Some(cfg.seed);
    report.config_hash = Some(super::config_hash(cfg));
    Ok(report)
}
