use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    align_gaze_to_frame, corner_crops, gaussian_saliency_map, is_central, scaled_to_width, AlignConfig, SaliencyMap,
    DEFAULT_SIGMA,
};
use crate::error::{Error, Result};
use crate::simworld::{Frame, SessionLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Gaze spread in pixels at the reference width of 227.
    pub sigma: f64,
    pub input_size: usize,
    pub target_size: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub align: AlignConfig,
    /// Corner crops have side `width - crop_margin_sigmas * sigma`.
    pub crop_margin_sigmas: f64,
    pub augment: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            sigma: DEFAULT_SIGMA,
            input_size: 96,
            target_size: 48,
            train_fraction: 0.8,
            seed: 0,
            align: AlignConfig::default(),
            crop_margin_sigmas: 4.0,
            augment: true,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.align.validate()?;
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if self.input_size == 0 || self.target_size == 0 {
            return Err(Error::invalid("input and target sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::invalid("train_fraction must lie in [0, 1]"));
        }
        if !(self.crop_margin_sigmas > 0.0) {
            return Err(Error::invalid("crop_margin_sigmas must be positive"));
        }
        Ok(())
    }
}

/// Where a sample came from: the frame itself or one of its corner crops.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Provenance {
    Original,
    CropCorner(usize),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Original => f.write_str("original"),
            Provenance::CropCorner(k) => write!(f, "crop-corner-{k}"),
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "original" {
            return Ok(Provenance::Original);
        }
        s.strip_prefix("crop-corner-")
            .and_then(|k| k.parse().ok())
            .filter(|k| *k < 4)
            .map(Provenance::CropCorner)
            .ok_or_else(|| Error::invalid(format!("unknown provenance {s:?}")))
    }
}

impl From<Provenance> for String {
    fn from(p: Provenance) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Provenance {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub id: usize,
    pub provenance: Provenance,
    pub session: usize,
    pub frame_idx: usize,
    /// Target peak in the coordinates of the source frame (after the crop
    /// transform, for crops).
    pub gaze: (f64, f64),
    pub source_width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencySample {
    pub info: SampleInfo,
    /// `input_size` square RGB frame.
    pub frame: Frame,
    /// `target_size` square map quantized to 16 bits (`round(65535 * v)`).
    pub target: Vec<u16>,
}

impl SaliencySample {
    pub fn target_values(&self) -> Vec<f32> {
        self.target.iter().map(|&v| v as f32 / 65535.0).collect()
    }

    pub fn target_map(&self, side: usize) -> SaliencyMap {
        SaliencyMap {
            width: side,
            height: side,
            values: self.target.iter().map(|&v| v as f64 / 65535.0).collect(),
        }
    }

    /// Whether the target peak lies in the central square of the source frame.
    pub fn is_central(&self, sigma_at_reference: f64) -> bool {
        let w = self.info.source_width;
        let (x, y) = self.info.gaze;
        is_central(x, y, scaled_to_width(sigma_at_reference, w), w, w)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub source_frames: usize,
    pub dropped_frames: usize,
    pub central_frames: usize,
    pub originals: usize,
    pub crops: usize,
    pub train: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyDataset {
    pub config: DatasetConfig,
    pub counts: DatasetCounts,
    /// Indexed by sample id.
    pub samples: Vec<SaliencySample>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    config: DatasetConfig,
    counts: DatasetCounts,
    split_seed: u64,
    samples: Vec<SampleInfo>,
}

fn quantize(map: &SaliencyMap) -> Vec<u16> {
    map.values.iter().map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect()
}

/// Aligns gaze to every frame, generates original and crop samples, and
/// splits them by source frame so crops never straddle the split.
pub fn build_dataset(sessions: &[SessionLog], cfg: &DatasetConfig) -> Result<SaliencyDataset> {
    cfg.validate()?;
    if sessions.is_empty() {
        return Err(Error::invalid("build_dataset needs at least one session"));
    }
    let mut counts = DatasetCounts::default();
    let mut samples: Vec<SaliencySample> = Vec::new();
    // Sample ids of each source frame.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let t = cfg.target_size;

    for (session_idx, log) in sessions.iter().enumerate() {
        log.validate()?;
        let w = log.meta.width;
        let sigma = scaled_to_width(cfg.sigma, w);
        let crops = corner_crops(w, sigma, cfg.crop_margin_sigmas)?;
        let to_target = t as f64 / w as f64;
        for (frame_idx, frame) in log.frames.iter().enumerate() {
            counts.source_frames += 1;
            let aligned = match align_gaze_to_frame(frame_idx, frame.t_ms, &log.gaze, w, &cfg.align) {
                Ok(a) => a,
                Err(Error::FrameDropped { .. }) => {
                    counts.dropped_frames += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut group = Vec::new();
            let mut push = |provenance, img: Frame, gaze: (f64, f64)| -> Result<()> {
                let map = gaussian_saliency_map(gaze.0 * to_target, gaze.1 * to_target, sigma * to_target, t, t)?;
                let id = samples.len();
                samples.push(SaliencySample {
                    info: SampleInfo {
                        id,
                        provenance,
                        session: session_idx,
                        frame_idx,
                        gaze,
                        source_width: w,
                    },
                    frame: img,
                    target: quantize(&map),
                });
                group.push(id);
                Ok(())
            };
            let gaze = (aligned.x, aligned.y);
            push(Provenance::Original, frame.resized(cfg.input_size), gaze)?;
            counts.originals += 1;
            if cfg.augment && is_central(gaze.0, gaze.1, sigma, w, w) {
                counts.central_frames += 1;
                for crop in crops.iter().filter(|c| c.contains(gaze.0, gaze.1)) {
                    push(
                        Provenance::CropCorner(crop.corner),
                        crop.apply(frame, cfg.input_size),
                        crop.forward(gaze.0, gaze.1),
                    )?;
                    counts.crops += 1;
                }
            }
            groups.push(group);
        }
    }
    if samples.is_empty() {
        return Err(Error::invalid("no frame has a usable gaze point"));
    }

    // Fill the training side group by group, in seeded order, up to the
    // target sample count.
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let target_train = (cfg.train_fraction * samples.len() as f64).round() as usize;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for g in order {
        let ids = &groups[g];
        if train.len() + ids.len() <= target_train {
            train.extend_from_slice(ids);
        } else {
            test.extend_from_slice(ids);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    counts.train = train.len();
    counts.test = test.len();
    Ok(SaliencyDataset {
        config: cfg.clone(),
        counts,
        samples,
        train,
        test,
    })
}

impl SaliencyDataset {
    /// Writes `dataset.json`, `frame_NNNNNN.png`, `target_NNNNNN.pgm` (16-bit)
    /// and the `train.txt` / `test.txt` id lists.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = DatasetManifest {
            config: self.config.clone(),
            counts: self.counts.clone(),
            split_seed: self.config.seed,
            samples: self.samples.iter().map(|s| s.info.clone()).collect(),
        };
        let path = dir.join("dataset.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        for s in &self.samples {
            let id = s.info.id;
            let p = dir.join(format!("frame_{id:06}.png"));
            s.frame
                .to_image()
                .save_with_format(&p, image::ImageFormat::Png)
                .map_err(|e| Error::image(&p, e))?;
            write_pgm16(&dir.join(format!("target_{id:06}.pgm")), self.config.target_size, &s.target)?;
        }
        write_ids(&dir.join("train.txt"), &self.train)?;
        write_ids(&dir.join("test.txt"), &self.test)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("dataset.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let config = manifest.config;
        config.validate()?;
        let mut samples = Vec::with_capacity(manifest.samples.len());
        for (i, info) in manifest.samples.into_iter().enumerate() {
            if info.id != i {
                return Err(Error::invalid(format!("dataset.json sample {i} has id {}", info.id)));
            }
            let p = dir.join(format!("frame_{i:06}.png"));
            let img = image::open(&p).map_err(|e| Error::image(&p, e))?.to_rgb8();
            let frame = Frame::from_image(0, img);
            if frame.width != config.input_size || frame.height != config.input_size {
                return Err(Error::invalid(format!("{} is not {}px square", p.display(), config.input_size)));
            }
            let target = read_pgm16(&dir.join(format!("target_{i:06}.pgm")), config.target_size)?;
            samples.push(SaliencySample { info, frame, target });
        }
        let train = read_ids(&dir.join("train.txt"), samples.len())?;
        let test = read_ids(&dir.join("test.txt"), samples.len())?;
        if train.iter().any(|id| test.binary_search(id).is_ok()) {
            return Err(Error::invalid("train and test lists overlap"));
        }
        Ok(SaliencyDataset {
            config,
            counts: manifest.counts,
            samples,
            train,
            test,
        })
    }

    pub fn train_samples(&self) -> impl Iterator<Item = &SaliencySample> {
        self.train.iter().map(|&i| &self.samples[i])
    }

    pub fn test_samples(&self) -> impl Iterator<Item = &SaliencySample> {
        self.test.iter().map(|&i| &self.samples[i])
    }
}

fn write_pgm16(path: &Path, side: usize, values: &[u16]) -> Result<()> {
    let mut buf = format!("P5\n{side} {side}\n65535\n").into_bytes();
    for v in values {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_pgm16(path: &Path, side: usize) -> Result<Vec<u16>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = format!("P5\n{side} {side}\n65535\n");
    let body = bytes
        .strip_prefix(header.as_bytes())
        .ok_or_else(|| Error::invalid(format!("{} is not a {side}x{side} 16-bit PGM", path.display())))?;
    if body.len() != side * side * 2 {
        return Err(Error::invalid(format!("{} has a truncated payload", path.display())));
    }
    Ok(body.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect())
}

fn write_ids(path: &Path, ids: &[usize]) -> Result<()> {
    let mut out = Vec::new();
    for id in ids {
        writeln!(out, "{id:06}").expect("writing to a Vec cannot fail");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_ids(path: &Path, n_samples: usize) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let id: usize = line
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad sample id {line:?} in {}", path.display())))?;
        if id >= n_samples {
            return Err(Error::invalid(format!("sample id {id} out of range in {}", path.display())));
        }
        ids.push(id);
    }
    ids.sort_unstable();
    Ok(ids)
}
