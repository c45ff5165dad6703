//! The simulated capture chain: detections, matching, triangulation,
//! tracking and adaptive masks.

use super::config::TaskConfig;
use super::Result;
use crate::masking::build_mask;
use crate::metrics::{mpjpe, pcp, precision_recall, MetricReport, PR_THRESHOLD_M};
use crate::mocap::{
    default_rig, hungarian_match, load_rig, reconstruct, simulate_detections, DetectionParams, DetectionSet,
    ReconstructParams, Reconstruction3D, Rig,
};
use crate::motion::{synth_motion, MotionSequence, Skeleton};
use crate::rng::derive_seed;

pub struct Simulation {
    pub rig: Rig,
    pub scene: Vec<MotionSequence>,
    pub detections: DetectionSet,
    pub recon: Reconstruction3D,
    /// Reconstructed motion per track, with the adaptive mask set.
    pub masked: Vec<MotionSequence>,
    /// Ground-truth person of each track.
    pub assignment: Vec<usize>,
    pub report: MetricReport,
}

/// People spread along x, each walking its own synthetic path.
pub fn simulated_scene(cfg: &TaskConfig) -> Result<Vec<MotionSequence>> {
    let m = &cfg.mocap;
    let kinds = cfg.data.kinds()?;
    (0..m.people)
        .map(|i| {
            let seq = synth_motion(kinds[i % kinds.len()], m.frames, m.joints, derive_seed(cfg.seed, 0x5c + i as u64))?;
            let dx = (i as f64 - (m.people - 1) as f64 / 2.0) * m.spacing;
            Ok(seq.with_values(seq.values().chunks(3).flat_map(|p| [p[0] + dx, p[1], p[2]]).collect())?)
        })
        .collect()
}

pub fn run_simulate(cfg: &TaskConfig) -> Result<Simulation> {
    let m = &cfg.mocap;
    let rig = match &m.rig {
        Some(p) => load_rig(p)?,
        None => default_rig(),
    };
    let scene = simulated_scene(cfg)?;
    let params = DetectionParams {
        noise_px: m.noise_px,
        occl_prob: m.occl_prob,
        joint_occl: m.joint_occl.clone(),
        shuffle: true,
    };
    let detections = simulate_detections(&scene, &rig, &params, derive_seed(cfg.seed, 0xde7))?;
    let recon = reconstruct(
        &detections,
        &rig,
        &ReconstructParams {
            people: Some(m.people),
            max_epipolar_px: m.max_epipolar_px,
            ..ReconstructParams::default()
        },
    )?;
    let tracks: Vec<MotionSequence> = (0..recon.people).map(|n| recon.motion(n)).collect();
    let cost: Vec<Vec<f64>> = tracks
        .iter()
        .map(|t| scene.iter().map(|g| mpjpe(t, g).unwrap_or(f64::INFINITY)).collect())
        .collect();
    let mut assignment = vec![0; tracks.len()];
    if !tracks.is_empty() {
        for (t, g) in hungarian_match(&cost)? {
            assignment[t] = g;
        }
    }
    let mut report = MetricReport::new(Some(cfg.seed), Some(super::config_hash(cfg)));
    let mut masked = Vec::with_capacity(tracks.len());
    let mut forced = 0usize;
    let (mut err, mut pcps) = (0.0, 0.0);
    let (mut est, mut truth) = (Vec::new(), Vec::new());
    let len = m.frames * m.joints;
    for (n, track) in tracks.iter().enumerate() {
        let signals = recon.signals(n);
        forced += (0..len).filter(|&c| signals.invisible(c / m.joints, c % m.joints)).count();
        let mc = cfg.masking.inference.with_seed(derive_seed(cfg.seed, 0x3a5c + n as u64));
        let mask = build_mask(&mc, m.frames, m.joints, Some(&signals))?;
        let mut seq = track.clone();
        seq.set_mask(mask)?;
        masked.push(seq);
        let gt = &scene[assignment[n]];
        err += mpjpe(track, gt)? / tracks.len() as f64;
        pcps += pcp(track, gt, &Skeleton::for_joints(m.joints))? / tracks.len() as f64;
        for c in 0..len {
            let (t, j) = (c / m.joints, c % m.joints);
            est.push(recon.observed[n * len + c].then(|| track.cell(t, j).try_into().expect("3d")));
            truth.push(gt.cell(t, j).try_into().expect("3d"));
        }
    }
    for (g, person) in scene.iter().enumerate() {
        if !assignment.contains(&g) {
            for c in 0..len {
                est.push(None);
                truth.push(person.cell(c / m.joints, c % m.joints).try_into().expect("3d"));
            }
        }
    }
    let (precision, recall) = precision_recall(&est, &truth, PR_THRESHOLD_M)?;
    report.set("mpjpe", err)?;
    report.set("pcp", pcps)?;
    report.set("precision", precision)?;
    report.set("recall", recall)?;
    report.set("forced_cells", forced as f64)?;
    report.set("tracks", tracks.len() as f64)?;
    Ok(Simulation {
        rig,
        scene,
        detections,
        recon,
        masked,
        assignment,
        report,
    })
}
