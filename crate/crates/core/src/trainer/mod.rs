//! Training procedures: supervised RoadSal, driver cloning, unsupervised
//! attention behind a frozen driver, and the three comparison agents.
//!
//! All procedures share one minibatch loop ([`fit`]). Each batch is pushed
//! through the network in fixed-size chunks whose gradients are summed, so
//! peak memory is bounded by the chunk size while the update itself only
//! depends on the batch.

mod data;
mod procedures;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffcore::loss::validate_lambdas;
use crate::diffcore::{sgd_step, Gradients, ParamSet, SgdConfig, SparsityVariant};
use crate::error::{Error, Result};
use crate::nets::{save_checkpoint, Checkpoint};

pub use data::{DriveData, ImageSet};
pub use procedures::{
    attention_first_batch_gradients, train_agents, train_attention_unsupervised, train_driver, train_roadsal,
    AgentOutcomes, Pipeline, PipelineKind,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub sgd: SgdConfig,
    pub epochs: usize,
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub sparsity: SparsityVariant,
    /// Samples per forward/backward pass inside a batch.
    pub chunk_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sgd: SgdConfig::default(),
            epochs: 10,
            seed: 0,
            lambda1: 0.1,
            lambda2: 1.0,
            sparsity: SparsityVariant::Squared,
            chunk_size: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        validate_lambdas(self.lambda1, self.lambda2)?;
        if self.chunk_size == 0 {
            return Err(Error::invalid("chunk_size must be positive"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON form, recorded in checkpoints.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub procedure: String,
    pub config: TrainConfig,
    /// Batch size actually used (the configured one, capped at the train size).
    pub batch_size: usize,
    pub batch_clamped: bool,
    pub train_samples: usize,
    pub heldout_samples: usize,
    pub initial_train_loss: f64,
    /// Mean loss over each epoch's batches.
    pub train_loss: Vec<f64>,
    /// Loss on the held-out set after each epoch, if there is one.
    pub heldout_loss: Vec<Option<f64>>,
    /// Per-epoch means of procedure-specific terms (`loss1`, `mean_attention`, ...).
    pub series: BTreeMap<String, Vec<f64>>,
    /// Train loss and terms at the final parameters.
    pub final_train_loss: f64,
    pub final_metrics: BTreeMap<String, f64>,
    /// Relative to the output directory.
    pub checkpoint: Option<PathBuf>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl TrainReport {
    fn new(procedure: &str, config: &TrainConfig, train: usize, heldout: usize) -> Self {
        let batch_size = config.sgd.batch_size.min(train);
        TrainReport {
            procedure: procedure.into(),
            config: config.clone(),
            batch_size,
            batch_clamped: batch_size < config.sgd.batch_size,
            train_samples: train,
            heldout_samples: heldout,
            initial_train_loss: f64::NAN,
            train_loss: Vec::new(),
            heldout_loss: Vec::new(),
            series: BTreeMap::new(),
            final_train_loss: f64::NAN,
            final_metrics: BTreeMap::new(),
            checkpoint: None,
            wall_time: Duration::ZERO,
        }
    }

    /// `epoch,train_loss,heldout_loss` with an empty field when nothing was held out.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,heldout_loss\n");
        for (i, t) in self.train_loss.iter().enumerate() {
            let h = self.heldout_loss.get(i).copied().flatten().map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", i + 1, t, h);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "procedure        {}", self.procedure);
        let _ = writeln!(out, "epochs           {}", self.config.epochs);
        let clamp = if self.batch_clamped { " (clamped to train size)" } else { "" };
        let _ = writeln!(out, "batch size       {}{clamp}", self.batch_size);
        let _ = writeln!(out, "train samples    {}", self.train_samples);
        let _ = writeln!(out, "held-out samples {}", self.heldout_samples);
        let _ = writeln!(out, "initial loss     {:.6}", self.initial_train_loss);
        let _ = writeln!(out, "final loss       {:.6}", self.final_train_loss);
        if let Some(Some(h)) = self.heldout_loss.last() {
            let _ = writeln!(out, "final held-out   {h:.6}");
        }
        for (k, v) in &self.final_metrics {
            let _ = writeln!(out, "final {k:<10} {v:.6}");
        }
        if let Some(p) = &self.checkpoint {
            let _ = writeln!(out, "checkpoint       {}", p.display());
        }
        out
    }
}

/// Subdirectory of a training output that holds the checkpoint.
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// A trained network together with its report.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub checkpoint: Checkpoint,
}

impl TrainOutcome {
    /// Writes `checkpoint/`, `loss.csv`, `report.txt` and `report.json` under
    /// `dir`. Nothing written depends on timing or on `dir` itself.
    pub fn write(&mut self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_checkpoint(&dir.join(CHECKPOINT_DIR), &self.checkpoint)?;
        self.report.checkpoint = Some(PathBuf::from(CHECKPOINT_DIR));
        write_report(dir, &self.report)
    }
}

pub fn write_report(dir: &Path, report: &TrainReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("loss.csv");
    fs::write(&csv, report.loss_csv()).map_err(|e| Error::io(&csv, e))?;
    let txt = dir.join("report.txt");
    fs::write(&txt, report.summary()).map_err(|e| Error::io(&txt, e))?;
    let json_path = dir.join("report.json");
    let mut json = serde_json::to_vec_pretty(report).map_err(|e| Error::json(&json_path, e))?;
    json.push(b'\n');
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Split {
    Train,
    Heldout,
}

pub(crate) type Metrics = BTreeMap<&'static str, f64>;

/// A differentiable per-sample loss over an indexed train and held-out set.
pub(crate) trait Objective {
    fn len(&self, split: Split) -> usize;

    /// Summed loss over `idx`. When `grads` is given, the gradient of that sum
    /// is added into it. Per-sample terms are summed into `metrics`.
    fn eval(
        &self,
        params: &ParamSet<f32>,
        split: Split,
        idx: &[usize],
        grads: Option<&mut Gradients<f32>>,
        metrics: &mut Metrics,
    ) -> Result<f64>;
}

const SHUFFLE_STREAM: u64 = 11;

fn evaluate(obj: &dyn Objective, params: &ParamSet<f32>, split: Split, chunk: usize) -> Result<(f64, Metrics)> {
    let n = obj.len(split);
    let idx: Vec<usize> = (0..n).collect();
    let mut metrics = Metrics::new();
    let mut sum = 0.0;
    for c in idx.chunks(chunk) {
        sum += obj.eval(params, split, c, None, &mut metrics)?;
    }
    let n = n.max(1) as f64;
    metrics.values_mut().for_each(|v| *v /= n);
    Ok((sum / n, metrics))
}

fn owned(metrics: Metrics) -> BTreeMap<String, f64> {
    metrics.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn diverged(epoch: usize, mut report: TrainReport, start: Instant) -> Error {
    report.wall_time = start.elapsed();
    Error::Diverged {
        epoch,
        report: Box::new(report),
    }
}

/// Runs `cfg.epochs` epochs of shuffled minibatch SGD on `params`.
pub(crate) fn fit(
    procedure: &str,
    obj: &dyn Objective,
    params: &mut ParamSet<f32>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let start = Instant::now();
    let n = obj.len(Split::Train);
    if n == 0 {
        return Err(Error::invalid(format!("{procedure}: empty training set")));
    }
    let heldout_n = obj.len(Split::Heldout);
    let mut report = TrainReport::new(procedure, cfg, n, heldout_n);
    let sgd = SgdConfig {
        batch_size: report.batch_size,
        ..cfg.sgd.clone()
    };

    let (initial, _) = evaluate(obj, params, Split::Train, cfg.chunk_size)?;
    report.initial_train_loss = initial;
    if !initial.is_finite() {
        return Err(diverged(0, report, start));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = params.zero_grads();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut metrics = Metrics::new();
        for batch in order.chunks(sgd.batch_size) {
            grads.zero();
            for c in batch.chunks(cfg.chunk_size) {
                sum += obj.eval(params, Split::Train, c, Some(&mut grads), &mut metrics)?;
            }
            let scale = 1.0 / batch.len() as f32;
            for i in 0..grads.len() {
                grads.get_mut(i).scale(scale);
            }
            match sgd_step(params, &grads, &sgd) {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => return Err(diverged(epoch, report, start)),
                Err(e) => return Err(e),
            }
        }
        let loss = sum / n as f64;
        report.train_loss.push(loss);
        for (k, v) in metrics {
            report.series.entry(k.to_string()).or_default().push(v / n as f64);
        }
        let held = if heldout_n > 0 {
            Some(evaluate(obj, params, Split::Heldout, cfg.chunk_size)?.0)
        } else {
            None
        };
        report.heldout_loss.push(held);
        if !loss.is_finite() || held.is_some_and(|h| !h.is_finite()) {
            return Err(diverged(epoch, report, start));
        }
    }

    // Checkpoints hold weights only.
    params.reset_momentum();
    let (final_loss, final_metrics) = evaluate(obj, params, Split::Train, cfg.chunk_size)?;
    report.final_train_loss = final_loss;
    report.final_metrics = owned(final_metrics);
    report.wall_time = start.elapsed();
    if !final_loss.is_finite() {
        return Err(diverged(cfg.epochs, report, start));
    }
    Ok(report)
}
