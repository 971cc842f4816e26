//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown keys are errors. Every command-line flag names the key
//! it overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gazedrive::diffcore::{SgdConfig, SparsityVariant};
use gazedrive::gazeprep::{AlignConfig, DatasetConfig};
use gazedrive::nets::{AgentSpec, Net1Spec};
use gazedrive::simworld::{GazeConfig, SessionConfig};
use gazedrive::trainer::TrainConfig;

use crate::CliError;

pub struct Key {
    pub name: &'static str,
    pub doc: &'static str,
    default: fn() -> String,
}

macro_rules! key {
    ($name:literal, $doc:literal, $default:expr) => {
        Key {
            name: $name,
            doc: $doc,
            default: || $default.to_string(),
        }
    };
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn sparsity_name(v: SparsityVariant) -> &'static str {
    match v {
        SparsityVariant::Squared => "squared",
        SparsityVariant::Linear => "linear",
    }
}

/// Every recognized key, in the order `config.txt` lists them.
pub static KEYS: &[Key] = &[
    key!("seed", "seed for every random stream of the command", 0),
    key!("sim.track", "track layout: default|stadium", SessionConfig::default().track),
    key!("sim.frames", "frames per simulated session", SessionConfig::default().n_frames),
    key!("sim.frame_rate_hz", "frame and control rate", SessionConfig::default().frame_rate_hz),
    key!("sim.gaze_rate_hz", "gaze sample rate", SessionConfig::default().gaze_rate_hz),
    key!("sim.resolution", "rendered frame side, pixels", SessionConfig::default().resolution),
    key!("sim.view_span", "meters covered by a frame side", SessionConfig::default().view_span),
    key!("sim.steering_noise", "std of the executed-steering disturbance", SessionConfig::default().steering_noise),
    key!("sim.gaze_noise", "synthetic gaze noise, pixels", GazeConfig::default().noise_sigma),
    key!("sim.saccade_prob", "chance a gaze sample jumps to an obstacle", GazeConfig::default().saccade_prob),
    key!("sim.gaze_source", "oracle|none", "oracle"),
    key!("prep.sigma", "gaze spread, pixels at width 227", DatasetConfig::default().sigma),
    key!("prep.input_size", "dataset frame side", DatasetConfig::default().input_size),
    key!("prep.target_size", "dataset saliency target side", DatasetConfig::default().target_size),
    key!("prep.train_fraction", "fraction of frame groups in the train split", DatasetConfig::default().train_fraction),
    key!("prep.crop_margin_sigmas", "corner crops are width minus this many sigma", DatasetConfig::default().crop_margin_sigmas),
    key!("prep.augment", "add corner crops of central-gaze frames: true|false", DatasetConfig::default().augment),
    key!("prep.align_weights", "alignment weights, reference sample first", list(&AlignConfig::default().weights)),
    key!("prep.align_threshold", "alignment radius, pixels at width 227", AlignConfig::default().threshold),
    key!("net.input", "frame side seen by the driving and attention networks", AgentSpec::default().input),
    key!("train.epochs", "training epochs", TrainConfig::default().epochs),
    key!("train.learning_rate", "SGD learning rate", SgdConfig::default().learning_rate),
    key!("train.momentum", "SGD momentum", SgdConfig::default().momentum),
    key!("train.decay", "L2 weight decay", SgdConfig::default().decay),
    key!("train.batch_size", "minibatch size, capped at the train size", SgdConfig::default().batch_size),
    key!("train.chunk_size", "samples per forward/backward pass", TrainConfig::default().chunk_size),
    key!("train.lambda1", "weight of the attention sparsity term", TrainConfig::default().lambda1),
    key!("train.lambda2", "weight of the driving error term", TrainConfig::default().lambda2),
    key!("train.sparsity", "sparsity penalty: squared|linear", sparsity_name(TrainConfig::default().sparsity)),
    key!("train.heldout_fraction", "tail of the driving frames held out for the loss curve", 0.2),
    key!("gradcheck.instances", "random instances per operator", 10),
    key!("serve.port", "session service port on localhost", 8765),
    key!("io.out", "output directory", ""),
    key!("io.sessions", "session directories, comma separated", ""),
    key!("io.dataset", "saliency dataset directory", ""),
    key!("io.net2", "frozen driver checkpoint", ""),
    key!("io.roadsal", "RoadSal checkpoint", ""),
    key!("io.net1", "Net1 checkpoint", ""),
    key!("io.agents", "directory written by train-agents", ""),
    key!("io.test_session", "held-out session directory", ""),
    key!("io.ckpt", "attention checkpoint to visualize", ""),
    key!("io.session", "session directory", ""),
];

/// Keys left out of `config.txt` so reruns into another directory match.
const NOT_ECHOED: &[&str] = &["io.out"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|k| (k.name, (k.default)())).collect(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    CliError::new("config", msg).into()
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(config_err(format!("line {}: expected key = value, got {raw:?}", i + 1)));
            };
            cfg.set(k.trim(), v.trim()).map_err(|e| config_err(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("io", format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        let Some(k) = KEYS.iter().find(|k| k.name == key) else {
            return Err(config_err(format!("unknown key {key:?}")));
        };
        self.values.insert(k.name, value.to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("undeclared key {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse().map_err(|e| config_err(format!("{key} = {raw:?}: {e}")))
    }

    pub fn path(&self, key: &str) -> anyhow::Result<PathBuf> {
        match self.raw(key) {
            "" => Err(CliError::new("usage", format!("missing --{} (config key {key})", flag_for(key))).into()),
            p => Ok(PathBuf::from(p)),
        }
    }

    pub fn paths(&self, key: &str) -> anyhow::Result<Vec<PathBuf>> {
        let out: Vec<PathBuf> = self.raw(key).split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect();
        if out.is_empty() {
            return Err(CliError::new("usage", format!("missing --{} (config key {key})", flag_for(key))).into());
        }
        Ok(out)
    }

    /// The effective configuration in the input file format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for k in KEYS.iter().filter(|k| !NOT_ECHOED.contains(&k.name)) {
            let _ = writeln!(out, "# {}\n{} = {}", k.doc, k.name, self.raw(k.name));
        }
        out
    }

    pub fn session_config(&self) -> anyhow::Result<SessionConfig> {
        let mut c = SessionConfig {
            track: self.raw("sim.track").to_string(),
            n_frames: self.get("sim.frames")?,
            frame_rate_hz: self.get("sim.frame_rate_hz")?,
            gaze_rate_hz: self.get("sim.gaze_rate_hz")?,
            seed: self.get("seed")?,
            resolution: self.get("sim.resolution")?,
            view_span: self.get("sim.view_span")?,
            steering_noise: self.get("sim.steering_noise")?,
            gaze_source: self.get("sim.gaze_source")?,
            ..Default::default()
        };
        c.gaze.noise_sigma = self.get("sim.gaze_noise")?;
        c.gaze.saccade_prob = self.get("sim.saccade_prob")?;
        Ok(c)
    }

    pub fn dataset_config(&self) -> anyhow::Result<DatasetConfig> {
        let weights = self
            .raw("prep.align_weights")
            .split(',')
            .map(|w| w.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| config_err(format!("prep.align_weights: {e}")))?;
        Ok(DatasetConfig {
            sigma: self.get("prep.sigma")?,
            input_size: self.get("prep.input_size")?,
            target_size: self.get("prep.target_size")?,
            train_fraction: self.get("prep.train_fraction")?,
            seed: self.get("seed")?,
            align: AlignConfig {
                weights,
                threshold: self.get("prep.align_threshold")?,
            },
            crop_margin_sigmas: self.get("prep.crop_margin_sigmas")?,
            augment: self.get("prep.augment")?,
        })
    }

    pub fn train_config(&self) -> anyhow::Result<TrainConfig> {
        let sparsity = match self.raw("train.sparsity") {
            "squared" => SparsityVariant::Squared,
            "linear" => SparsityVariant::Linear,
            other => return Err(config_err(format!("train.sparsity = {other:?}: expected squared|linear"))),
        };
        let cfg = TrainConfig {
            sgd: SgdConfig {
                learning_rate: self.get("train.learning_rate")?,
                momentum: self.get("train.momentum")?,
                decay: self.get("train.decay")?,
                batch_size: self.get("train.batch_size")?,
            },
            epochs: self.get("train.epochs")?,
            seed: self.get("seed")?,
            lambda1: self.get("train.lambda1")?,
            lambda2: self.get("train.lambda2")?,
            sparsity,
            chunk_size: self.get("train.chunk_size")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn agent_spec(&self) -> anyhow::Result<AgentSpec> {
        Ok(AgentSpec {
            input: self.get("net.input")?,
            ..Default::default()
        })
    }

    pub fn net1_spec(&self) -> anyhow::Result<Net1Spec> {
        Ok(Net1Spec {
            input: self.get("net.input")?,
            ..Default::default()
        })
    }
}

/// The long flag that sets `key`.
pub fn flag_for(key: &str) -> String {
    key.rsplit('.').next().unwrap_or(key).replace('_', "-")
}
