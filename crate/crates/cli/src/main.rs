use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use mmdm_core::motion::{save_motion, MotionSequence};
use mmdm_core::metrics::MetricReport;
use mmdm_core::mocap::save_rig;
use mmdm_core::network::save_checkpoint;
use mmdm_core::pipeline::complete::load_pose_model;
use mmdm_core::pipeline::config::{ModelKind, SamplerKind, Task, TaskConfig};
use mmdm_core::pipeline::{
    completion_dataset, run_completion, run_eval, run_inbetween, run_refinement, run_simulate, token_dataset,
    train_inbetween, train_pose_model, CompletionModel, InbetweenSystem, PipelineError, TrainLog,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Train,
    Complete,
    Refine,
    Inbetween,
    Simulate,
    Eval,
}

impl Cmd {
    fn task(self) -> Task {
        match self {
            Cmd::Train => Task::Train,
            Cmd::Complete => Task::Complete,
            Cmd::Refine => Task::Refine,
            Cmd::Inbetween => Task::Inbetween,
            Cmd::Simulate => Task::Simulate,
            Cmd::Eval => Task::Eval,
        }
    }
}

/// Masked motion diffusion tasks.
#[derive(Debug, Parser)]
#[command(name = "mmdm", version)]
struct Args {
    task: Cmd,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of diffusion steps K.
    #[arg(long)]
    steps: Option<usize>,
    /// DDIM stride; selects the deterministic sampler.
    #[arg(long)]
    ddim: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn load_config(args: &Args) -> Result<TaskConfig, Failure> {
    let mut cfg = TaskConfig::load(&args.config)?;
    if cfg.task != args.task.task() {
        return Err(Failure::Config(anyhow::anyhow!(
            "config is for task `{}`, not `{}`",
            cfg.task.name(),
            args.task.task().name()
        )));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(k) = args.steps {
        cfg.diffusion.steps = k;
    }
    if let Some(n) = args.ddim {
        cfg.diffusion.sampler = SamplerKind::Ddim;
        cfg.diffusion.ddim_stride = n;
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    if let Some(c) = &args.checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &TaskConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display())).map_err(Failure::Runtime)?;
    Ok(dir)
}

fn write_report(dir: &Path, report: &MetricReport) -> Result<(), Failure> {
    std::fs::write(dir.join("report.txt"), report.to_text())?;
    std::fs::write(dir.join("report.json"), report.to_json())?;
    print!("{}", report.to_text());
    Ok(())
}

fn write_motions(dir: &Path, stem: &str, motions: &[MotionSequence]) -> Result<(), Failure> {
    for (i, m) in motions.iter().enumerate() {
        save_motion(m, dir.join(format!("{stem}_{i:03}.motion"))).map_err(|e| Failure::Runtime(e.into()))?;
    }
    Ok(())
}

fn train_report(cfg: &TaskConfig, log: &TrainLog) -> Result<MetricReport, Failure> {
    let mut r = MetricReport::new(Some(cfg.seed), Some(mmdm_core::pipeline::config_hash(cfg)));
    for phase in 0..2 {
        let probes = log.probes_of(phase);
        let (Some(first), Some(best)) = (probes.first(), probes.iter().map(|p| p.1).reduce(f64::min)) else {
            continue;
        };
        let name = if phase == 0 { "pretrain" } else { "finetune" };
        let set = |r: &mut MetricReport, k: &str, v: f64| r.set(&format!("loss.{name}.{k}"), v);
        set(&mut r, "initial", first.1).map_err(|e| Failure::Runtime(e.into()))?;
        set(&mut r, "best", best).map_err(|e| Failure::Runtime(e.into()))?;
    }
    Ok(r)
}

fn train(cfg: &TaskConfig, dir: &Path) -> Result<(), Failure> {
    let kind = cfg.train.model;
    let (checkpoint, log) = if kind == ModelKind::Inbetween {
        let split = cfg.split.split()?;
        let data = token_dataset(cfg, cfg.data.frames.unwrap_or(split.total()))?;
        let init = match &cfg.checkpoint {
            Some(_) => Some(InbetweenSystem::from_checkpoint(mmdm_core::pipeline::load_model_checkpoint(cfg)?)?),
            None => None,
        };
        let (sys, log) = train_inbetween(cfg, &data, init)?;
        (sys.to_checkpoint(), log)
    } else {
        let data = completion_dataset(cfg)?;
        let init = match &cfg.checkpoint {
            Some(_) => Some(load_pose_model(cfg)?),
            None => None,
        };
        let (model, log): (CompletionModel, TrainLog) = train_pose_model(cfg, kind, &data, init)?;
        (model.to_checkpoint(), log)
    };
    save_checkpoint(&checkpoint, dir.join("checkpoint.json")).map_err(|e| Failure::Runtime(e.into()))?;
    std::fs::write(dir.join("loss.txt"), log.to_text())?;
    write_report(dir, &train_report(cfg, &log)?)
}

fn run(args: &Args) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    let dir = out_dir(&cfg)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    match cfg.task {
        Task::Train => train(&cfg, &dir),
        Task::Complete => {
            let out = run_completion(&cfg, &load_pose_model(&cfg)?)?;
            write_motions(&dir, "completed", &out.outputs)?;
            write_report(&dir, &out.report)
        }
        Task::Refine => {
            let out = run_refinement(&cfg, &load_pose_model(&cfg)?)?;
            write_motions(&dir, "refined", &out.outputs)?;
            write_report(&dir, &out.report)
        }
        Task::Inbetween => {
            let sys = InbetweenSystem::from_checkpoint(mmdm_core::pipeline::load_model_checkpoint(&cfg)?)?;
            let out = run_inbetween(&cfg, &sys, &cfg.imputation)?;
            write_motions(&dir, "inbetween", &out.outputs)?;
            write_report(&dir, &out.report)
        }
        Task::Simulate => {
            let sim = run_simulate(&cfg)?;
            save_rig(&sim.rig, dir.join("rig.txt")).map_err(|e| Failure::Runtime(e.into()))?;
            write_motions(&dir, "truth", &sim.scene)?;
            write_motions(&dir, "track", &sim.masked)?;
            write_report(&dir, &sim.report)
        }
        Task::Eval => write_report(&dir, &run_eval(&cfg)?),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
