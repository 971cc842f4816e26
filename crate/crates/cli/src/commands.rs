use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use gazedrive::diffcore::gradcheck::{run_suite, MAX_REL_ERR};
use gazedrive::evalreport::{compare_models, constant_baseline, evaluate_mse, export_saliency_pairs};
use gazedrive::gazeprep::{build_dataset, SaliencyDataset};
use gazedrive::nets::{load_checkpoint, save_checkpoint, ArchSpec, Checkpoint, RoadSalSpec};
use gazedrive::simworld::{run_session, SessionLog};
use gazedrive::trainer::{
    train_agents, train_attention_unsupervised, train_driver, train_roadsal, DriveData, Pipeline, PipelineKind,
    TrainOutcome, CHECKPOINT_DIR,
};

use crate::args::Command;
use crate::config::RunConfig;
use crate::service::{router, ServiceState, SystemClock};
use crate::CliError;

pub const CONFIG_ECHO: &str = "config.txt";
const BASELINE_FILE: &str = "baseline.json";
const MODELS: [(&str, PipelineKind); 3] = [
    ("model1", PipelineKind::Raw),
    ("model2", PipelineKind::RoadSal),
    ("model3", PipelineKind::Net1),
];

pub fn execute(cmd: &Command) -> anyhow::Result<()> {
    let mut cfg = match cmd.config_file() {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cmd.apply(&mut cfg)?;
    match cmd {
        Command::Simulate(_) => simulate(&cfg),
        Command::GazePrep(_) => gaze_prep(&cfg),
        Command::TrainRoadsal(_) => train_roadsal_cmd(&cfg),
        Command::TrainDriver(_) => train_driver_cmd(&cfg),
        Command::TrainAttn(_) => train_attn_cmd(&cfg),
        Command::TrainAgents(_) => train_agents_cmd(&cfg),
        Command::Evaluate(_) => evaluate(&cfg),
        Command::ExportPairs(_) => export_pairs(&cfg),
        Command::Gradcheck(_) => gradcheck(&cfg),
        Command::Serve(_) => serve(&cfg),
    }
}

/// Creates the output directory and echoes the configuration into it.
fn prepare_out(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let out = cfg.path("io.out")?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(CONFIG_ECHO), cfg.render()).with_context(|| format!("writing {}", out.display()))?;
    Ok(out)
}

fn load_sessions(cfg: &RunConfig) -> anyhow::Result<Vec<SessionLog>> {
    cfg.paths("io.sessions")?
        .iter()
        .map(|p| SessionLog::load(p).map_err(anyhow::Error::from))
        .collect()
}

/// Accepts a checkpoint directory or a training output that contains one.
pub fn resolve_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    let dir = if path.join("manifest.json").exists() {
        path.to_path_buf()
    } else {
        path.join(CHECKPOINT_DIR)
    };
    Ok(load_checkpoint(&dir)?)
}

fn drive_split(cfg: &RunConfig, side: usize) -> anyhow::Result<(DriveData, Option<DriveData>)> {
    let data = DriveData::from_sessions(&load_sessions(cfg)?, side)?;
    let fraction: f64 = cfg.get("train.heldout_fraction")?;
    let (train, held) = data.split_tail(fraction)?;
    Ok((train, (!held.is_empty()).then_some(held)))
}

fn finish_training(out: &Path, mut outcome: TrainOutcome) -> anyhow::Result<()> {
    let wall = outcome.report.wall_time;
    outcome.write(out)?;
    print!("{}", outcome.report.summary());
    println!("wall time        {:.1} s", wall.as_secs_f64());
    Ok(())
}

fn simulate(cfg: &RunConfig) -> anyhow::Result<()> {
    let session = run_session(&cfg.session_config()?)?;
    let out = prepare_out(cfg)?;
    session.save(&out)?;
    println!(
        "wrote {} frames, {} gaze samples to {}",
        session.frames.len(),
        session.gaze.len(),
        out.display()
    );
    Ok(())
}

fn gaze_prep(cfg: &RunConfig) -> anyhow::Result<()> {
    let ds = build_dataset(&load_sessions(cfg)?, &cfg.dataset_config()?)?;
    let out = prepare_out(cfg)?;
    ds.save(&out)?;
    let c = &ds.counts;
    println!("{c:?}");
    println!("train {} / test {} samples in {}", ds.train.len(), ds.test.len(), out.display());
    Ok(())
}

fn train_roadsal_cmd(cfg: &RunConfig) -> anyhow::Result<()> {
    let dir = cfg.path("io.dataset")?;
    let ds = SaliencyDataset::load(&dir)?;
    // The network input follows the dataset it is trained on.
    let spec = RoadSalSpec {
        input: ds.config.input_size,
        ..Default::default()
    };
    let outcome = train_roadsal(&ds, &spec, &cfg.train_config()?)?;
    finish_training(&prepare_out(cfg)?, outcome)
}

fn train_driver_cmd(cfg: &RunConfig) -> anyhow::Result<()> {
    let spec = cfg.agent_spec()?;
    let (train, held) = drive_split(cfg, spec.input)?;
    let outcome = train_driver(&train, held.as_ref(), &spec, &cfg.train_config()?, "net2")?;
    finish_training(&prepare_out(cfg)?, outcome)
}

fn train_attn_cmd(cfg: &RunConfig) -> anyhow::Result<()> {
    let net2 = resolve_checkpoint(&cfg.path("io.net2")?)?;
    let spec = cfg.net1_spec()?;
    let (train, held) = drive_split(cfg, spec.input)?;
    let outcome = train_attention_unsupervised(&net2, &train, held.as_ref(), &spec, &cfg.train_config()?)?;
    finish_training(&prepare_out(cfg)?, outcome)
}

#[derive(Serialize, Deserialize)]
struct Baseline {
    mean_action: [f64; 3],
    train_frames: usize,
}

fn train_agents_cmd(cfg: &RunConfig) -> anyhow::Result<()> {
    let roadsal = resolve_checkpoint(&cfg.path("io.roadsal")?)?;
    let net1 = resolve_checkpoint(&cfg.path("io.net1")?)?;
    let spec = cfg.agent_spec()?;
    let train_cfg = cfg.train_config()?;
    let (train, held) = drive_split(cfg, spec.input)?;
    let outcomes = train_agents(&roadsal, &net1, &train, held.as_ref(), &spec, &train_cfg)?;

    let out = prepare_out(cfg)?;
    save_checkpoint(&out.join("attention").join("roadsal"), &roadsal)?;
    save_checkpoint(&out.join("attention").join("net1"), &net1)?;
    let baseline = Baseline {
        mean_action: train.mean_action(),
        train_frames: train.len(),
    };
    fs::write(out.join(BASELINE_FILE), serde_json::to_string_pretty(&baseline)? + "\n")?;
    for (name, _, o) in outcomes.iter() {
        let mut o = o.clone();
        let wall = o.report.wall_time;
        o.write(&out.join(name))?;
        println!(
            "{name}: final train loss {:.6}, held-out {}, {:.1} s",
            o.report.final_train_loss,
            o.report.heldout_loss.last().copied().flatten().map_or("-".into(), |h| format!("{h:.6}")),
            wall.as_secs_f64()
        );
    }
    println!(
        "constant mean-action baseline on train: {:.6}",
        train.constant_mse(baseline.mean_action)
    );
    Ok(())
}

fn evaluate(cfg: &RunConfig) -> anyhow::Result<()> {
    let agents = cfg.path("io.agents")?;
    let attention = |key: &str, name: &str| -> anyhow::Result<Checkpoint> {
        match cfg.raw(key) {
            "" => resolve_checkpoint(&agents.join("attention").join(name)),
            p => resolve_checkpoint(Path::new(p)),
        }
    };
    let roadsal = attention("io.roadsal", "roadsal")?;
    let net1 = attention("io.net1", "net1")?;
    let test_session = SessionLog::load(&cfg.path("io.test_session")?)?;

    let mut rows = Vec::new();
    let mut data: Option<DriveData> = None;
    for (name, kind) in MODELS {
        let agent = resolve_checkpoint(&agents.join(name))?;
        let ArchSpec::Agent(spec) = &agent.spec else {
            return Err(CliError::new("invalid-argument", format!("{name} is not an agent checkpoint")).into());
        };
        if data.as_ref().is_none_or(|d| d.images.shape()[0] != spec.input) {
            data = Some(DriveData::from_sessions(std::slice::from_ref(&test_session), spec.input)?);
        }
        let test = data.as_ref().expect("set above");
        let att = match kind {
            PipelineKind::Raw => None,
            PipelineKind::RoadSal => Some(&roadsal),
            PipelineKind::Net1 => Some(&net1),
        };
        rows.push(evaluate_mse(name, &agent, kind, att, test)?);
    }
    let mut cmp = compare_models(&rows)?;
    let baseline_path = agents.join(BASELINE_FILE);
    if baseline_path.exists() {
        let b: Baseline = serde_json::from_str(&fs::read_to_string(&baseline_path)?)
            .with_context(|| format!("reading {}", baseline_path.display()))?;
        cmp.baseline = Some(constant_baseline(b.mean_action, data.as_ref().expect("three rows"))?);
    }
    let out = prepare_out(cfg)?;
    cmp.write(&out)?;
    print!("{}", cmp.table());
    Ok(())
}

fn export_pairs(cfg: &RunConfig) -> anyhow::Result<()> {
    let ckpt = resolve_checkpoint(&cfg.path("io.ckpt")?)?;
    let (kind, side) = match &ckpt.spec {
        ArchSpec::RoadSal(s) => (PipelineKind::RoadSal, s.input),
        ArchSpec::Net1(s) => (PipelineKind::Net1, s.input),
        ArchSpec::Agent(_) => {
            return Err(CliError::new("invalid-argument", "export-pairs needs a RoadSal or Net1 checkpoint").into())
        }
    };
    let session = SessionLog::load(&cfg.path("io.session")?)?;
    let data = DriveData::from_sessions(&[session], side)?;
    let pipeline = Pipeline::new(kind, Some(&ckpt), side)?;
    let maps = pipeline.maps(&data.images.gather(&(0..data.len()).collect::<Vec<_>>()))?.expect("attention pipeline");
    let out = prepare_out(cfg)?;
    let files = export_saliency_pairs(&data.images, &maps, &out)?;
    println!("wrote {} pairs to {}", files.len(), out.display());
    Ok(())
}

fn gradcheck(cfg: &RunConfig) -> anyhow::Result<()> {
    let instances: usize = cfg.get("gradcheck.instances")?;
    let outcomes = run_suite(instances, cfg.get("seed")?)?;
    let mut text = String::new();
    for o in &outcomes {
        let verdict = if o.passed() { "PASS" } else { "FAIL" };
        text += &format!("{verdict} {:<32} instances {:>3}  max rel err {:.3e}\n", o.name, o.instances, o.max_rel_err);
    }
    print!("{text}");
    if !cfg.raw("io.out").is_empty() {
        fs::write(prepare_out(cfg)?.join("gradcheck.txt"), &text)?;
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed()).map(|o| o.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(CliError::new(
            "gradcheck",
            format!("{} operator(s) above {MAX_REL_ERR:e}: {}", failed.len(), failed.join(", ")),
        )
        .into());
    }
    Ok(())
}

fn serve(cfg: &RunConfig) -> anyhow::Result<()> {
    let port: u16 = cfg.get("serve.port")?;
    let out = match cfg.raw("io.out") {
        "" => PathBuf::from("sessions"),
        p => PathBuf::from(p),
    };
    fs::create_dir_all(&out)?;
    let state = ServiceState::new(Arc::new(SystemClock::new()), out.clone(), cfg.session_config()?);
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
            .await
            .map_err(|e| CliError::new("io", format!("cannot bind 127.0.0.1:{port}: {e}")))?;
        println!("listening on http://127.0.0.1:{port}, sessions go to {}", out.display());
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })
}
