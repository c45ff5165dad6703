use mmdm_core::metrics::{accel_error, l2p, mpjpe, npss, pcp, precision_recall, MetricReport, PR_THRESHOLD_M};
use mmdm_core::motion::{save_motion, synth_motion, Skeleton, SynthKind};
use mmdm_core::network::{Mmdm, NetworkConfig};
use mmdm_core::pipeline::{
    completion_dataset, run_completion, run_eval, run_simulate, train_pose_model, ModelKind, PipelineError, Task,
    TaskConfig,
};
use mmdm_core::rng;

const TINY_NET: &str = r#"
[network]
depth = 1
dim = 8
heads = 2
head_dim = 4
ffn_dim = 16
in_dim = 3
out_dim = 3
dec_depth = 1
"#;

fn train_cfg(steps: usize) -> TaskConfig {
    TaskConfig::parse(&format!(
        "task = \"train\"\nseed = 3\nseq_len = 6\n{TINY_NET}\n[diffusion]\nsteps = 5\n[train]\npretrain_steps = {steps}\nfinetune_steps = {steps}\nlr = 1e-3\nbatch = 2\nprobe_size = 2\n[data]\ncount = 4\n"
    ))
    .unwrap()
}

#[test]
fn eval_matches_direct_metric_calls() {
    let dir = tempfile::tempdir().unwrap();
    let gt = synth_motion(SynthKind::FigureEight, 12, 17, 1).unwrap();
    let mut r = rng::seeded(2);
    let mut pred = gt.with_values(gt.values().iter().map(|v| v + 0.05 * rng::normal(&mut r)).collect()).unwrap();
    let mut mask = vec![false; 12 * 17];
    mask[5] = true;
    mask[40] = true;
    pred.set_mask(mask.clone()).unwrap();
    let (pp, gp) = (dir.path().join("pred.motion"), dir.path().join("gt.motion"));
    save_motion(&pred, &pp).unwrap();
    save_motion(&gt, &gp).unwrap();
    let cfg = TaskConfig::parse(&format!(
        "task = \"eval\"\n[eval]\npred = {:?}\ngt = {:?}\n",
        pp.display().to_string(),
        gp.display().to_string()
    ))
    .unwrap();
    let report = run_eval(&cfg).unwrap();
    let est: Vec<Option<[f64; 3]>> = pred
        .values()
        .chunks(3)
        .zip(&mask)
        .map(|(p, &m)| (!m).then(|| [p[0], p[1], p[2]]))
        .collect();
    let truth: Vec<[f64; 3]> = gt.values().chunks(3).map(|p| [p[0], p[1], p[2]]).collect();
    let (precision, recall) = precision_recall(&est, &truth, PR_THRESHOLD_M).unwrap();
    let expect = [
        ("accel", accel_error(&pred, &gt).unwrap()),
        ("l2p", l2p(&pred, &gt).unwrap()),
        ("mpjpe", mpjpe(&pred, &gt).unwrap()),
        ("npss", npss(&pred, &gt).unwrap()),
        ("pcp", pcp(&pred, &gt, &Skeleton::h36m17()).unwrap()),
        ("precision", precision),
        ("recall", recall),
    ];
    assert_eq!(report.metrics.len(), expect.len());
    for (name, v) in expect {
        assert_eq!(report.get(name).unwrap().to_bits(), v.to_bits(), "{name}");
    }
    assert_eq!(report.seed, Some(0));
    assert!(report.config_hash.as_ref().is_some_and(|h| h.len() == 64));
}

#[test]
fn eval_without_inputs_is_a_config_error() {
    let err = run_eval(&TaskConfig::new(Task::Eval)).unwrap_err();
    assert!(err.is_config());
}

#[test]
fn report_text_is_alphabetical_and_round_trips() {
    let mut r = MetricReport::new(Some(4), Some("ab".into()));
    for (n, v) in [("recall", 90.0), ("accel", 3.5), ("mpjpe", 12.25), ("l2p", 0.5)] {
        r.set(n, v).unwrap();
    }
    let text = r.to_text();
    let names: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).map(|l| l.split(' ').next().unwrap()).collect();
    assert_eq!(names, ["accel", "l2p", "mpjpe", "recall"]);
    assert!(text.starts_with("# seed 4\n# config ab\n"));
    assert!(text.contains("mpjpe 12.25 mm\n"));
    assert_eq!(MetricReport::parse_text(&text).unwrap(), r);
    assert_eq!(MetricReport::from_json(&r.to_json()).unwrap(), r);
}

#[test]
fn zero_step_training_returns_initialization() {
    let cfg = train_cfg(0);
    let data = completion_dataset(&cfg).unwrap();
    let (model, log) = train_pose_model(&cfg, ModelKind::Completion, &data, None).unwrap();
    let fresh = Mmdm::new(cfg.network.clone().unwrap()).unwrap();
    assert_eq!(model.net.params, fresh.params);
    assert!(log.losses.is_empty());
}

#[test]
fn short_training_is_deterministic_and_moves() {
    let cfg = train_cfg(3);
    let data = completion_dataset(&cfg).unwrap();
    let (a, la) = train_pose_model(&cfg, ModelKind::Completion, &data, None).unwrap();
    let (b, lb) = train_pose_model(&cfg, ModelKind::Completion, &data, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(la.to_text(), lb.to_text());
    assert_eq!(la.losses.len(), 6);
    let fresh = Mmdm::new(cfg.network.clone().unwrap()).unwrap();
    assert_ne!(a.net.params, fresh.params);
}

#[test]
fn completion_runs_are_seeded() {
    let cfg = train_cfg(0);
    let data = completion_dataset(&cfg).unwrap();
    let (model, _) = train_pose_model(&cfg, ModelKind::Completion, &data, None).unwrap();
    let mut run = TaskConfig::parse(&format!("task = \"complete\"\nseq_len = 6\n{TINY_NET}\n[diffusion]\nsteps = 5\n[data]\ncount = 2\n")).unwrap();
    let a = run_completion(&run, &model).unwrap();
    let b = run_completion(&run, &model).unwrap();
    assert_eq!(a.outputs, b.outputs);
    assert_eq!(a.report.to_text(), b.report.to_text());
    assert!(a.report.get("mpjpe.gaussian").is_some());
    run.seed = 1;
    assert_ne!(run_completion(&run, &model).unwrap().outputs, a.outputs);
}

#[test]
fn simulate_is_deterministic() {
    let mut cfg = TaskConfig::parse("task = \"simulate\"\n[mocap]\npeople = 2\nframes = 8\n").unwrap();
    let a = run_simulate(&cfg).unwrap();
    let b = run_simulate(&cfg).unwrap();
    assert_eq!(a.recon, b.recon);
    assert_eq!(a.masked, b.masked);
    assert_eq!(a.report.to_text(), b.report.to_text());
    assert!(a.report.get("mpjpe").unwrap() < 50.0);
    cfg.seed = 9;
    assert_ne!(run_simulate(&cfg).unwrap().recon, a.recon);
}

#[test]
fn config_errors() {
    for text in [
        "task = \"train\"\nbogus = 1\n",
        "task = \"complete\"\nseq_len = 1\n",
        "task = \"train\"\n[train]\nlr = -1.0\n",
        "task = \"inbetween\"\n[split]\ntransition = 0\n",
        "task = \"nope\"\n",
    ] {
        let err = TaskConfig::parse(text).unwrap_err();
        assert!(err.is_config(), "{text}: {err}");
    }
    assert!(matches!(
        TaskConfig::parse("task = \"train\"\n[data]\ncount = 0\n"),
        Err(PipelineError::Config(_))
    ));
}
