use std::fmt::Display;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "gazedrive", version, about = "Saliency-guided driving agents over a toy simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Drive the oracle around a track and record a session with synthetic gaze.
    Simulate(SimulateArgs),
    /// Turn sessions into a saliency dataset.
    GazePrep(GazePrepArgs),
    /// Train the supervised saliency network.
    TrainRoadsal(TrainRoadsalArgs),
    /// Clone the oracle driver from frames (the frozen driver for train-attn).
    TrainDriver(TrainDriverArgs),
    /// Train the attention network behind a frozen driver.
    TrainAttn(TrainAttnArgs),
    /// Train the three comparison agents (raw, RoadSal, Net1 inputs).
    TrainAgents(TrainAgentsArgs),
    /// Evaluate the three agents on a held-out session.
    Evaluate(EvaluateArgs),
    /// Write frame | map | weighted frame images for an attention checkpoint.
    ExportPairs(ExportPairsArgs),
    /// Run the finite-difference gradient suite; exits nonzero on failure.
    Gradcheck(GradcheckArgs),
    /// Serve the capture session API on localhost.
    Serve(ServeArgs),
}

impl Command {
    pub fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        match self {
            Command::Simulate(a) => a.apply(cfg),
            Command::GazePrep(a) => a.apply(cfg),
            Command::TrainRoadsal(a) => a.apply(cfg),
            Command::TrainDriver(a) => a.apply(cfg),
            Command::TrainAttn(a) => a.apply(cfg),
            Command::TrainAgents(a) => a.apply(cfg),
            Command::Evaluate(a) => a.apply(cfg),
            Command::ExportPairs(a) => a.apply(cfg),
            Command::Gradcheck(a) => a.apply(cfg),
            Command::Serve(a) => a.apply(cfg),
        }
    }

    pub fn config_file(&self) -> Option<&PathBuf> {
        let c = match self {
            Command::Simulate(a) => &a.common,
            Command::GazePrep(a) => &a.common,
            Command::TrainRoadsal(a) => &a.common,
            Command::TrainDriver(a) => &a.common,
            Command::TrainAttn(a) => &a.common,
            Command::TrainAgents(a) => &a.common,
            Command::Evaluate(a) => &a.common,
            Command::ExportPairs(a) => &a.common,
            Command::Gradcheck(a) => &a.common,
            Command::Serve(a) => &a.common,
        };
        c.config.as_ref()
    }
}

fn put<T: Display>(cfg: &mut RunConfig, key: &str, v: &Option<T>) -> anyhow::Result<()> {
    if let Some(v) = v {
        cfg.set(key, &v.to_string())?;
    }
    Ok(())
}

fn put_paths(cfg: &mut RunConfig, key: &str, v: &[PathBuf]) -> anyhow::Result<()> {
    if !v.is_empty() {
        let joined: Vec<String> = v.iter().map(|p| p.display().to_string()).collect();
        cfg.set(key, &joined.join(","))?;
    }
    Ok(())
}

fn put_path(cfg: &mut RunConfig, key: &str, v: &Option<PathBuf>) -> anyhow::Result<()> {
    put(cfg, key, &v.as_ref().map(|p| p.display().to_string()))
}

#[derive(Args, Debug)]
pub struct Common {
    /// Key-value config file; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream [config: seed]
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
    /// Output directory [config: io.out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl Common {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        put(cfg, "seed", &self.seed)?;
        put_path(cfg, "io.out", &self.out)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Frames to record [config: sim.frames]
    #[arg(long, value_name = "N")]
    pub frames: Option<usize>,
    /// Track layout, default|stadium [config: sim.track]
    #[arg(long)]
    pub track: Option<String>,
    /// Frame and control rate [config: sim.frame_rate_hz]
    #[arg(long, value_name = "HZ")]
    pub frame_rate_hz: Option<f64>,
    /// Gaze sample rate [config: sim.gaze_rate_hz]
    #[arg(long, value_name = "HZ")]
    pub gaze_rate_hz: Option<f64>,
    /// Frame side in pixels [config: sim.resolution]
    #[arg(long, value_name = "PX")]
    pub resolution: Option<usize>,
    /// Meters covered by a frame side [config: sim.view_span]
    #[arg(long, value_name = "M")]
    pub view_span: Option<f64>,
    /// Std of the executed-steering disturbance [config: sim.steering_noise]
    #[arg(long, value_name = "X")]
    pub steering_noise: Option<f64>,
    /// Synthetic gaze noise in pixels [config: sim.gaze_noise]
    #[arg(long, value_name = "PX")]
    pub gaze_noise: Option<f64>,
    /// Chance a gaze sample jumps to an obstacle [config: sim.saccade_prob]
    #[arg(long, value_name = "P")]
    pub saccade_prob: Option<f64>,
    /// oracle|none [config: sim.gaze_source]
    #[arg(long)]
    pub gaze_source: Option<String>,
}

impl SimulateArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        self.common.apply(cfg)?;
        put(cfg, "sim.frames", &self.frames)?;
        put(cfg, "sim.track", &self.track)?;
        put(cfg, "sim.frame_rate_hz", &self.frame_rate_hz)?;
        put(cfg, "sim.gaze_rate_hz", &self.gaze_rate_hz)?;
        put(cfg, "sim.resolution", &self.resolution)?;
        put(cfg, "sim.view_span", &self.view_span)?;
        put(cfg, "sim.steering_noise", &self.steering_noise)?;
        put(cfg, "sim.gaze_noise", &self.gaze_noise)?;
        put(cfg, "sim.saccade_prob", &self.saccade_prob)?;
        put(cfg, "sim.gaze_source", &self.gaze_source)
    }
}

#[derive(Args, Debug)]
pub struct GazePrepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Session directories [config: io.sessions]
    #[arg(long, value_name = "DIR", num_args = 1..)]
    pub sessions: Vec<PathBuf>,
    /// Gaze spread in pixels at width 227 [config: prep.sigma]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Dataset frame side [config: prep.input_size]
    #[arg(long, value_name = "PX")]
    pub input_size: Option<usize>,
    /// Saliency target side [config: prep.target_size]
    #[arg(long, value_name = "PX")]
    pub target_size: Option<usize>,
    /// Fraction of frame groups in the train split [config: prep.train_fraction]
    #[arg(long, value_name = "F")]
    pub train_fraction: Option<f64>,
    /// Corner crop margin in sigmas [config: prep.crop_margin_sigmas]
    #[arg(long, value_name = "K")]
    pub crop_margin_sigmas: Option<f64>,
    /// Add corner crops, true|false [config: prep.augment]
    #[arg(long, value_name = "BOOL")]
    pub augment: Option<bool>,
    /// Alignment weights, reference first, comma separated [config: prep.align_weights]
    #[arg(long, value_name = "W,...")]
    pub align_weights: Option<String>,
    /// Alignment radius in pixels at width 227 [config: prep.align_threshold]
    #[arg(long, value_name = "PX")]
    pub align_threshold: Option<f64>,
}

impl GazePrepArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        self.common.apply(cfg)?;
        put_paths(cfg, "io.sessions", &self.sessions)?;
        put(cfg, "prep.sigma", &self.sigma)?;
        put(cfg, "prep.input_size", &self.input_size)?;
        put(cfg, "prep.target_size", &self.target_size)?;
        put(cfg, "prep.train_fraction", &self.train_fraction)?;
        put(cfg, "prep.crop_margin_sigmas", &self.crop_margin_sigmas)?;
        put(cfg, "prep.augment", &self.augment)?;
        put(cfg, "prep.align_weights", &self.align_weights)?;
        put(cfg, "prep.align_threshold", &self.align_threshold)
    }
}

#[derive(Args, Debug)]
pub struct TrainFlags {
    /// Training epochs [config: train.epochs]
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    /// SGD learning rate [config: train.learning_rate]
    #[arg(long, value_name = "LR")]
    pub learning_rate: Option<f64>,
    /// SGD momentum [config: train.momentum]
    #[arg(long)]
    pub momentum: Option<f64>,
    /// L2 weight decay [config: train.decay]
    #[arg(long)]
    pub decay: Option<f64>,
    /// Minibatch size, capped at the train size [config: train.batch_size]
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Samples per forward/backward pass [config: train.chunk_size]
    #[arg(long, value_name = "N")]
    pub chunk_size: Option<usize>,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        put(cfg, "train.epochs", &self.epochs)?;
        put(cfg, "train.learning_rate", &self.learning_rate)?;
        put(cfg, "train.momentum", &self.momentum)?;
        put(cfg, "train.decay", &self.decay)?;
        put(cfg, "train.batch_size", &self.batch_size)?;
        put(cfg, "train.chunk_size", &self.chunk_size)
    }
}

#[derive(Args, Debug)]
pub struct DriveFlags {
    /// Session directories [config: io.sessions]
    #[arg(long, value_name = "DIR", num_args = 1..)]
    pub sessions: Vec<PathBuf>,
    /// Network input side [config: net.input]
    #[arg(long, value_name = "PX")]
    pub input: Option<usize>,
    /// Tail of the frames held out for the loss curve [config: train.heldout_fraction]
    #[arg(long, value_name = "F")]
    pub heldout_fraction: Option<f64>,
}

impl DriveFlags {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        put_paths(cfg, "io.sessions", &self.sessions)?;
        put(cfg, "net.input", &self.input)?;
        put(cfg, "train.heldout_fraction", &self.heldout_fraction)
    }
}

#[derive(Args, Debug)]
pub struct TrainRoadsalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Saliency dataset directory [config: io.dataset]
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
}

impl TrainRoadsalArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        self.common.apply(cfg)?;
        self.train.apply(cfg)?;
        put_path(cfg, "io.dataset", &self.dataset)
    }
}

#[derive(Args, Debug)]
pub struct TrainDriverArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub drive: DriveFlags,
}

impl TrainDriverArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        self.common.apply(cfg)?;
        self.train.apply(cfg)?;
        self.drive.apply(cfg)
    }
}

#[derive(Args, Debug)]
pub struct TrainAttnArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub drive: DriveFlags,
    /// Frozen driver checkpoint [config: io.net2]
    #[arg(long, value_name = "CKPT")]
    pub net2: Option<PathBuf>,
    /// Weight of the sparsity term [config: train.lambda1]
    #[arg(long, value_name = "X")]
    pub lambda1: Option<f64>,
    /// Weight of the driving error term [config: train.lambda2]
    #[arg(long, value_name = "Y")]
    pub lambda2: Option<f64>,
    /// squared|linear [config: train.sparsity]
    #[arg(long)]
    pub sparsity: Option<String>,
}

impl TrainAttnArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        self.common.apply(cfg)?;
        self.train.apply(cfg)?;
        self.drive.apply(cfg)?;
        put_path(cfg, "io.net2", &self.net2)?;
        put(cfg, "train.lambda1", &self.lambda1)?;
        put(cfg, "train.lambda2", &self.lambda2)?;
        put(cfg, "train.sparsity", &self.sparsity)
    }
}

#[derive(Args, Debug)]
pub struct TrainAgentsArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub drive: DriveFlags,
    /// RoadSal checkpoint [config: io.roadsal]
    #[arg(long, value_name = "CKPT")]
    pub roadsal: Option<PathBuf>,
    /// Net1 checkpoint [config: io.net1]
    #[arg(long, value_name = "CKPT")]
    pub net1: Option<PathBuf>,
}

impl TrainAgentsArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        self.common.apply(cfg)?;
        self.train.apply(cfg)?;
        self.drive.apply(cfg)?;
        put_path(cfg, "io.roadsal", &self.roadsal)?;
        put_path(cfg, "io.net1", &self.net1)
    }
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory written by train-agents [config: io.agents]
    #[arg(long, value_name = "DIR")]
    pub agents: Option<PathBuf>,
    /// Held-out session directory [config: io.test_session]
    #[arg(long, value_name = "DIR")]
    pub test_session: Option<PathBuf>,
    /// RoadSal checkpoint, instead of the copy under --agents [config: io.roadsal]
    #[arg(long, value_name = "CKPT")]
    pub roadsal: Option<PathBuf>,
    /// Net1 checkpoint, instead of the copy under --agents [config: io.net1]
    #[arg(long, value_name = "CKPT")]
    pub net1: Option<PathBuf>,
}

impl EvaluateArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        self.common.apply(cfg)?;
        put_path(cfg, "io.agents", &self.agents)?;
        put_path(cfg, "io.test_session", &self.test_session)?;
        put_path(cfg, "io.roadsal", &self.roadsal)?;
        put_path(cfg, "io.net1", &self.net1)
    }
}

#[derive(Args, Debug)]
pub struct ExportPairsArgs {
    #[command(flatten)]
    pub common: Common,
    /// RoadSal or Net1 checkpoint [config: io.ckpt]
    #[arg(long, value_name = "CKPT")]
    pub ckpt: Option<PathBuf>,
    /// Session whose frames are shown [config: io.session]
    #[arg(long, value_name = "DIR")]
    pub session: Option<PathBuf>,
}

impl ExportPairsArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        self.common.apply(cfg)?;
        put_path(cfg, "io.ckpt", &self.ckpt)?;
        put_path(cfg, "io.session", &self.session)
    }
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// Random instances per operator [config: gradcheck.instances]
    #[arg(long, value_name = "N")]
    pub instances: Option<usize>,
}

impl GradcheckArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        self.common.apply(cfg)?;
        put(cfg, "gradcheck.instances", &self.instances)
    }
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Port on 127.0.0.1 [config: serve.port]
    #[arg(long, value_name = "P")]
    pub port: Option<u16>,
}

impl ServeArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        self.common.apply(cfg)?;
        put(cfg, "serve.port", &self.port)
    }
}
