//! Open-loop evaluation of driving agents on held-out frames, the
//! three-model comparison table and side-by-side saliency exports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::nets::{ArchSpec, Checkpoint};
use crate::simworld::DrivingAction;
use crate::trainer::{DriveData, ImageSet, Pipeline, PipelineKind};

const EVAL_CHUNK: usize = 32;
/// Largest allowed gap between the two ways of computing the combined error.
const COMBINED_TOLERANCE: f64 = 1e-12;

/// Mean squared error per action and their average.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionErrors {
    pub steering: f64,
    pub throttle: f64,
    pub brake: f64,
    pub combined: f64,
}

impl ActionErrors {
    /// Scores predictions against ground truth. With `clamp`, each prediction
    /// is first pushed into the valid action ranges.
    pub fn score(predictions: &[[f32; 3]], truth: &[[f32; 3]], clamp: bool) -> Result<Self> {
        if predictions.len() != truth.len() || truth.is_empty() {
            return Err(Error::invalid(format!(
                "{} predictions for {} frames",
                predictions.len(),
                truth.len()
            )));
        }
        let n = truth.len() as f64;
        let mut per_action = [0.0f64; 3];
        let mut per_frame = 0.0f64;
        for (p, t) in predictions.iter().zip(truth) {
            let p = p.map(f64::from);
            let p = if clamp { DrivingAction::from_array(p).as_array() } else { p };
            let mut frame = 0.0;
            for k in 0..3 {
                let d = (p[k] - t[k] as f64).powi(2);
                per_action[k] += d;
                frame += d;
            }
            per_frame += frame / 3.0;
        }
        let [steering, throttle, brake] = per_action.map(|v| v / n);
        let combined = per_frame / n;
        let mean = (steering + throttle + brake) / 3.0;
        if (combined - mean).abs() > COMBINED_TOLERANCE {
            return Err(Error::NonFinite(format!(
                "combined error {combined} disagrees with the per-action mean {mean}"
            )));
        }
        Ok(ActionErrors {
            steering,
            throttle,
            brake,
            combined,
        })
    }
}

/// One model's errors on one test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub model: String,
    pub pipeline: PipelineKind,
    pub frames: usize,
    pub dataset_digest: String,
    /// Errors after clamping predictions into the action ranges.
    pub clamped: ActionErrors,
    pub unclamped: ActionErrors,
}

/// Hex SHA-256 over the frames and actions of a test set.
pub fn dataset_digest(data: &DriveData) -> String {
    let mut h = Sha256::new();
    for d in data.images.shape() {
        h.update((d as u64).to_le_bytes());
    }
    h.update((data.len() as u64).to_le_bytes());
    for i in 0..data.len() {
        for v in data.images.get(i).data() {
            h.update(v.to_le_bytes());
        }
        for v in data.actions[i] {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Raw agent outputs for every frame, after routing it through `pipeline`.
pub fn predict(agent: &Checkpoint, pipeline: &Pipeline, images: &ImageSet) -> Result<Vec<[f32; 3]>> {
    let ArchSpec::Agent(spec) = &agent.spec else {
        return Err(Error::invalid(format!(
            "expected an agent checkpoint, got {}",
            agent.spec.kind()
        )));
    };
    if images.shape() != [spec.input, spec.input, 3] {
        return Err(Error::shape("evaluate", &[spec.input, spec.input, 3], &images.shape()));
    }
    let net = agent.net()?;
    net.check_params(&agent.params)?;
    let idx: Vec<usize> = (0..images.len()).collect();
    let mut out = Vec::with_capacity(images.len());
    for chunk in idx.chunks(EVAL_CHUNK) {
        let x = pipeline.apply_batch(&images.gather(chunk))?;
        let y = net.forward(&agent.params, &x)?;
        out.extend(y.data().chunks_exact(3).map(|a| [a[0], a[1], a[2]]));
    }
    Ok(out)
}

/// Held-out errors of `agent` whose frames go through `kind`, which needs the
/// matching attention checkpoint unless it is `raw`.
pub fn evaluate_mse(
    model: &str,
    agent: &Checkpoint,
    kind: PipelineKind,
    attention: Option<&Checkpoint>,
    test: &DriveData,
) -> Result<EvalResult> {
    let ArchSpec::Agent(spec) = &agent.spec else {
        return Err(Error::invalid(format!(
            "{model}: expected an agent checkpoint, got {}",
            agent.spec.kind()
        )));
    };
    let pipeline = Pipeline::new(kind, attention, spec.input)?;
    let preds = predict(agent, &pipeline, &test.images)?;
    Ok(EvalResult {
        model: model.into(),
        pipeline: kind,
        frames: test.len(),
        dataset_digest: dataset_digest(test),
        clamped: ActionErrors::score(&preds, &test.actions, true)?,
        unclamped: ActionErrors::score(&preds, &test.actions, false)?,
    })
}

/// Whether the reference ordering (model2 < model1 < model3) showed up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceFlag {
    MatchesReference,
    DiffersFromReference,
    Indeterminate,
}

impl ReferenceFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceFlag::MatchesReference => "matches-reference",
            ReferenceFlag::DiffersFromReference => "differs-from-reference",
            ReferenceFlag::Indeterminate => "indeterminate",
        }
    }
}

const REFERENCE_ORDER: [&str; 3] = ["model2", "model1", "model3"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<EvalResult>,
    /// Model names from best to worst clamped combined error.
    pub ranking: Vec<String>,
    /// e.g. `model2 < model1 = model3`.
    pub ordering: String,
    pub has_tie: bool,
    /// Informational only.
    pub flag: ReferenceFlag,
    /// Errors of always predicting the train-set mean action, when known.
    pub baseline: Option<ActionErrors>,
}

/// Orders three results over the same test set by clamped combined error.
pub fn compare_models(rows: &[EvalResult]) -> Result<Comparison> {
    if rows.len() != 3 {
        return Err(Error::invalid(format!("expected three models, got {}", rows.len())));
    }
    let first = &rows[0];
    for r in &rows[1..] {
        if r.dataset_digest != first.dataset_digest || r.frames != first.frames {
            return Err(Error::invalid(format!(
                "{} and {} were evaluated on different test sets",
                first.model, r.model
            )));
        }
    }
    let mut sorted: Vec<&EvalResult> = rows.iter().collect();
    sorted.sort_by(|a, b| a.clamped.combined.total_cmp(&b.clamped.combined));
    let mut ordering = sorted[0].model.clone();
    let mut has_tie = false;
    for w in sorted.windows(2) {
        let tie = w[0].clamped.combined == w[1].clamped.combined;
        has_tie |= tie;
        let _ = write!(ordering, " {} {}", if tie { "=" } else { "<" }, w[1].model);
    }
    let ranking: Vec<String> = sorted.iter().map(|r| r.model.clone()).collect();
    let flag = if has_tie {
        ReferenceFlag::Indeterminate
    } else if ranking == REFERENCE_ORDER {
        ReferenceFlag::MatchesReference
    } else {
        ReferenceFlag::DiffersFromReference
    };
    Ok(Comparison {
        rows: rows.to_vec(),
        ranking,
        ordering,
        has_tie,
        flag,
        baseline: None,
    })
}

/// Errors of predicting `mean` for every test frame.
pub fn constant_baseline(mean: [f64; 3], test: &DriveData) -> Result<ActionErrors> {
    let pred = [mean[0] as f32, mean[1] as f32, mean[2] as f32];
    ActionErrors::score(&vec![pred; test.len()], &test.actions, true)
}

impl Comparison {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let first = &self.rows[0];
        let _ = writeln!(out, "test frames {}  dataset {}", first.frames, first.dataset_digest);
        let _ = writeln!(
            out,
            "{:<8} {:<8} {:>10} {:>10} {:>10} {:>10} {:>12}",
            "model", "pipeline", "steering", "throttle", "brake", "combined", "unclamped"
        );
        for r in &self.rows {
            let c = &r.clamped;
            let _ = writeln!(
                out,
                "{:<8} {:<8} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>12.6}",
                r.model,
                r.pipeline.as_str(),
                c.steering,
                c.throttle,
                c.brake,
                c.combined,
                r.unclamped.combined
            );
        }
        if let Some(b) = &self.baseline {
            let _ = writeln!(
                out,
                "{:<8} {:<8} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
                "baseline", "mean", b.steering, b.throttle, b.brake, b.combined
            );
        }
        let _ = writeln!(out, "ordering    {}", self.ordering);
        let _ = writeln!(out, "reference   model2 < model1 < model3: {}", self.flag.as_str());
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(
            "model,pipeline,frames,steering,throttle,brake,combined,\
             unclamped_steering,unclamped_throttle,unclamped_brake,unclamped_combined,dataset_digest\n",
        );
        for r in &self.rows {
            let (c, u) = (&r.clamped, &r.unclamped);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.model,
                r.pipeline.as_str(),
                r.frames,
                c.steering,
                c.throttle,
                c.brake,
                c.combined,
                u.steering,
                u.throttle,
                u.brake,
                u.combined,
                r.dataset_digest
            );
        }
        out
    }

    /// Writes `comparison.txt`, `comparison.csv` and `comparison.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let txt = dir.join("comparison.txt");
        fs::write(&txt, self.table()).map_err(|e| Error::io(&txt, e))?;
        let csv = dir.join("comparison.csv");
        fs::write(&csv, self.csv()).map_err(|e| Error::io(&csv, e))?;
        let path = dir.join("comparison.json");
        let mut json = serde_json::to_vec_pretty(self).map_err(|e| Error::json(&path, e))?;
        json.push(b'\n');
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `pair_NNNNNN.png` per frame: the frame, its map in grayscale and
/// the frame times the map, side by side. `maps` is `N x H x W`.
pub fn export_saliency_pairs(images: &ImageSet, maps: &Tensor<f32>, dir: &Path) -> Result<Vec<PathBuf>> {
    let [h, w, c] = images.shape();
    if c != 3 {
        return Err(Error::shape("export_saliency_pairs", &[h, w, 3], &[h, w, c]));
    }
    if maps.shape() != [images.len(), h, w] {
        return Err(Error::shape("export_saliency_pairs", &[images.len(), h, w], maps.shape()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(images.len());
    for (i, map) in maps.data().chunks_exact(h * w).enumerate() {
        let frame = images.get(i);
        let px = frame.data();
        let img = RgbImage::from_fn((3 * w) as u32, h as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            let (panel, col) = (x / w, x % w);
            let m = map[y * w + col];
            let at = |k: usize| px[(y * w + col) * 3 + k];
            image::Rgb(match panel {
                0 => [to_byte(at(0)), to_byte(at(1)), to_byte(at(2))],
                1 => [to_byte(m); 3],
                _ => [to_byte(at(0) * m), to_byte(at(1) * m), to_byte(at(2) * m)],
            })
        });
        let path = dir.join(format!("pair_{i:06}.png"));
        img.save_with_format(&path, image::ImageFormat::Png).map_err(|e| Error::image(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
