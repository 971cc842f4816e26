use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::gaze::{synth_gaze, GazeConfig};
use super::oracle::{oracle_action, OracleConfig};
use super::render::{render_frame, Camera, Frame};
use super::track::{Track, TrackSpec};
use super::{step_dynamics, CarState, DrivingAction, VehicleParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t_ms: u64,
    /// Column, in pixels.
    pub x: f64,
    /// Row, in pixels.
    pub y: f64,
}

/// Who produced the gaze stream of a session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GazeSource {
    Oracle,
    Human,
    None,
}

impl std::str::FromStr for GazeSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(GazeSource::Oracle),
            "human" => Ok(GazeSource::Human),
            "none" => Ok(GazeSource::None),
            other => Err(Error::invalid(format!(
                "unknown gaze source {other:?} (expected oracle|human|none)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub width: usize,
    pub height: usize,
    pub frame_rate_hz: f64,
    pub gaze_rate_hz: f64,
    /// `oracle` or `human`: who drove.
    pub source: String,
    pub gaze_source: GazeSource,
    pub track: String,
    pub seed: Option<u64>,
    /// Simulator constants in effect for the session.
    pub constants: BTreeMap<String, f64>,
}

/// One recorded driving session: frames with their actions, plus an
/// independent gaze stream on the same millisecond clock.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionLog {
    pub meta: SessionMeta,
    pub frames: Vec<Frame>,
    pub gaze: Vec<GazeSample>,
    /// `actions[k]` was taken in response to `frames[k]`.
    pub actions: Vec<DrivingAction>,
}

#[derive(Serialize, Deserialize)]
struct FrameLine {
    frame_idx: usize,
    t_ms: u64,
}

#[derive(Serialize, Deserialize)]
struct ActionLine {
    frame_idx: usize,
    steering: f64,
    throttle: f64,
    brake: f64,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidSession(msg.into())
}

impl SessionLog {
    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        if m.width == 0 || m.width != m.height {
            return Err(invalid(format!("frames must be square, got {}x{}", m.width, m.height)));
        }
        if !(m.frame_rate_hz > 0.0) || !(m.gaze_rate_hz >= m.frame_rate_hz) {
            return Err(invalid(format!(
                "need 0 < frame rate <= gaze rate, got {} / {}",
                m.frame_rate_hz, m.gaze_rate_hz
            )));
        }
        if m.source != "oracle" && m.source != "human" {
            return Err(invalid(format!("unknown session source {:?}", m.source)));
        }
        if self.frames.is_empty() {
            return Err(invalid("session has no frames"));
        }
        if self.actions.len() != self.frames.len() {
            return Err(invalid(format!(
                "{} actions for {} frames",
                self.actions.len(),
                self.frames.len()
            )));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.width != m.width || f.height != m.height || f.rgb.len() != f.width * f.height * 3 {
                return Err(invalid(format!(
                    "frame {i} is {}x{}, expected {}x{}",
                    f.width, f.height, m.width, m.height
                )));
            }
        }
        if let Some(i) = self.frames.windows(2).position(|w| w[1].t_ms <= w[0].t_ms) {
            return Err(invalid(format!("frame timestamps not increasing at frame {}", i + 1)));
        }
        if let Some(i) = self.gaze.windows(2).position(|w| w[1].t_ms <= w[0].t_ms) {
            return Err(invalid(format!("gaze timestamps not increasing at sample {}", i + 1)));
        }
        let (w, h) = (m.width as f64, m.height as f64);
        if let Some(g) = self
            .gaze
            .iter()
            .find(|g| !(g.x >= 0.0 && g.x < w && g.y >= 0.0 && g.y < h))
        {
            return Err(invalid(format!("gaze sample at {} ms outside the frame: ({}, {})", g.t_ms, g.x, g.y)));
        }
        if let Some(i) = self.actions.iter().position(|a| !a.is_valid()) {
            return Err(invalid(format!("action {i} outside its range: {:?}", self.actions[i])));
        }
        Ok(())
    }

    /// Writes the session directory: `meta.json`, `frames/NNNNNN.png`,
    /// `frames.jsonl`, `gaze.jsonl` and `actions.jsonl`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        let frames_dir = dir.join("frames");
        if frames_dir.exists() {
            fs::remove_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
        }
        fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
        let meta_path = dir.join("meta.json");
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::json(&meta_path, e))?;
        fs::write(&meta_path, meta + "\n").map_err(|e| Error::io(&meta_path, e))?;

        for (i, f) in self.frames.iter().enumerate() {
            let p = frames_dir.join(format!("{i:06}.png"));
            f.to_image()
                .save_with_format(&p, image::ImageFormat::Png)
                .map_err(|e| Error::image(&p, e))?;
        }
        write_jsonl(
            &dir.join("frames.jsonl"),
            self.frames.iter().enumerate().map(|(frame_idx, f)| FrameLine {
                frame_idx,
                t_ms: f.t_ms,
            }),
        )?;
        write_jsonl(&dir.join("gaze.jsonl"), self.gaze.iter())?;
        write_jsonl(
            &dir.join("actions.jsonl"),
            self.actions.iter().enumerate().map(|(frame_idx, a)| ActionLine {
                frame_idx,
                steering: a.steering,
                throttle: a.throttle,
                brake: a.brake,
            }),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: SessionMeta = serde_json::from_str(&text).map_err(|e| Error::json(&meta_path, e))?;

        let frame_lines: Vec<FrameLine> = read_jsonl(&dir.join("frames.jsonl"))?;
        let mut frames = Vec::with_capacity(frame_lines.len());
        for (i, line) in frame_lines.iter().enumerate() {
            if line.frame_idx != i {
                return Err(invalid(format!("frames.jsonl line {i} has frame_idx {}", line.frame_idx)));
            }
            let p = dir.join("frames").join(format!("{i:06}.png"));
            let img = image::open(&p).map_err(|e| Error::image(&p, e))?.to_rgb8();
            frames.push(Frame::from_image(line.t_ms, img));
        }
        let gaze: Vec<GazeSample> = read_jsonl(&dir.join("gaze.jsonl"))?;
        let action_lines: Vec<ActionLine> = read_jsonl(&dir.join("actions.jsonl"))?;
        let mut actions = Vec::with_capacity(action_lines.len());
        for (i, a) in action_lines.iter().enumerate() {
            if a.frame_idx != i {
                return Err(invalid(format!("actions.jsonl line {i} has frame_idx {}", a.frame_idx)));
            }
            actions.push(DrivingAction {
                steering: a.steering,
                throttle: a.throttle,
                brake: a.brake,
            });
        }
        let log = SessionLog {
            meta,
            frames,
            gaze,
            actions,
        };
        log.validate()?;
        Ok(log)
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row).map_err(|e| Error::json(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(out)
}

/// Settings of a closed-loop oracle session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub track: String,
    pub n_frames: usize,
    pub frame_rate_hz: f64,
    pub gaze_rate_hz: f64,
    pub gaze_source: GazeSource,
    pub seed: u64,
    pub resolution: usize,
    pub view_span: f64,
    /// Timestamp of the first frame, ms.
    pub first_frame_ms: u64,
    /// Frame and gaze timestamps get uniform integer jitter in `[0, max]` ms.
    pub frame_jitter_ms: u64,
    pub gaze_jitter_ms: u64,
    /// Std of the AR(1) disturbance added to the executed (not the recorded)
    /// steering, which makes the oracle demonstrate recoveries.
    pub steering_noise: f64,
    pub vehicle: VehicleParams,
    pub oracle: OracleConfig,
    pub gaze: GazeConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            track: "default".into(),
            n_frames: 100,
            frame_rate_hz: 10.0,
            gaze_rate_hz: 50.0,
            gaze_source: GazeSource::Oracle,
            seed: 0,
            resolution: 227,
            view_span: 36.0,
            first_frame_ms: 40,
            frame_jitter_ms: 3,
            gaze_jitter_ms: 2,
            steering_noise: 0.025,
            vehicle: VehicleParams::default(),
            oracle: OracleConfig::default(),
            gaze: GazeConfig::default(),
        }
    }
}

impl SessionConfig {
    fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::invalid("n_frames must be positive"));
        }
        if !(self.frame_rate_hz > 0.0) || !(self.gaze_rate_hz >= self.frame_rate_hz) {
            return Err(Error::invalid(format!(
                "need 0 < frame_rate_hz <= gaze_rate_hz, got {} / {}",
                self.frame_rate_hz, self.gaze_rate_hz
            )));
        }
        for (name, rate, jitter) in [
            ("frame", self.frame_rate_hz, self.frame_jitter_ms),
            ("gaze", self.gaze_rate_hz, self.gaze_jitter_ms),
        ] {
            if 1000.0 / rate < jitter as f64 + 2.0 {
                return Err(Error::invalid(format!(
                    "{name} rate {rate} Hz is too fast for {jitter} ms of jitter on a millisecond clock"
                )));
            }
        }
        if self.resolution < 8 {
            return Err(Error::invalid("resolution must be at least 8 pixels"));
        }
        if !(self.steering_noise >= 0.0) || !(self.gaze.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise levels must be nonnegative"));
        }
        if !(self.oracle.throttle_gain > 0.0) || !(self.oracle.brake_gain >= 0.0) {
            return Err(Error::invalid("oracle throttle_gain must be positive and brake_gain nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.gaze.saccade_prob) {
            return Err(Error::invalid("saccade_prob must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn camera(&self) -> Camera {
        Camera {
            width: self.resolution,
            view_span: self.view_span,
        }
    }

    fn constants(&self) -> BTreeMap<String, f64> {
        let v = &self.vehicle;
        let o = &self.oracle;
        [
            ("wheelbase", v.wheelbase),
            ("max_steer", v.max_steer),
            ("max_accel", v.max_accel),
            ("max_brake", v.max_brake),
            ("drag", v.drag),
            ("car_width", v.width),
            ("dt", 1.0 / self.frame_rate_hz),
            ("view_span", self.view_span),
            ("lookahead_gain", o.lookahead_gain),
            ("lookahead_base", o.lookahead_base),
            ("lateral_accel", o.lateral_accel),
            ("max_speed", o.max_speed),
            ("steering_noise", self.steering_noise),
            ("gaze_noise_sigma", self.gaze.noise_sigma),
            ("saccade_prob", self.gaze.saccade_prob),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

// Random stream ids; each concern draws from its own stream.
const STREAM_START: u64 = 1;
const STREAM_CLOCK: u64 = 2;
const STREAM_DRIVE: u64 = 3;
const STREAM_GAZE: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Drives the oracle around the track, recording frames and actions at the
/// frame rate and synthetic gaze on its own clock.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionLog> {
    cfg.validate()?;
    let track = Track::new(TrackSpec::by_name(&cfg.track)?, cfg.vehicle.width)?;
    let camera = cfg.camera();
    let dt = 1.0 / cfg.frame_rate_hz;

    let mut rng = stream(cfg.seed, STREAM_START);
    let g = &track.geometry;
    let s0 = rng.random_range(0.0..g.length());
    let c = g.point_at(s0);
    let d = g.direction_at(s0);
    let offset = rng.random_range(-1.0..1.0);
    let mut state = CarState {
        x: c[0] - d[1] * offset,
        y: c[1] + d[0] * offset,
        heading: d[1].atan2(d[0]) + rng.random_range(-0.05..0.05),
        speed: 0.0,
    };
    state.speed = cfg.oracle.target_speed(&track, &state);

    let mut clock = stream(cfg.seed, STREAM_CLOCK);
    let frame_times: Vec<u64> = (0..cfg.n_frames)
        .map(|k| {
            let base = (k as f64 * 1000.0 / cfg.frame_rate_hz).round() as u64;
            cfg.first_frame_ms + base + clock.random_range(0..=cfg.frame_jitter_ms)
        })
        .collect();

    let mut drive = stream(cfg.seed, STREAM_DRIVE);
    let disturbance = Normal::new(0.0, cfg.steering_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::invalid(e.to_string()))?;
    let mut wobble = 0.0;
    let mut states = Vec::with_capacity(cfg.n_frames);
    let mut frames = Vec::with_capacity(cfg.n_frames);
    let mut actions = Vec::with_capacity(cfg.n_frames);
    for &t in &frame_times {
        frames.push(render_frame(&track, &state, &camera, t));
        let action = oracle_action(&track, &state, &cfg.vehicle, &cfg.oracle);
        actions.push(action);
        states.push(state);
        if cfg.steering_noise > 0.0 {
            wobble = 0.8 * wobble + disturbance.sample(&mut drive);
        }
        let executed = DrivingAction::new(action.steering + wobble, action.throttle, action.brake);
        state = step_dynamics(&state, &executed, &cfg.vehicle, dt);
    }

    let mut gaze = Vec::new();
    if cfg.gaze_source == GazeSource::Oracle {
        let mut rng = stream(cfg.seed, STREAM_GAZE);
        let period = 1000.0 / cfg.gaze_rate_hz;
        let phase = rng.random_range(0.0..period);
        let end = frame_times[frame_times.len() - 1] + (1000.0 / cfg.frame_rate_hz).round() as u64;
        let mut shown = 0;
        for j in 0.. {
            let t = (phase + j as f64 * period).round() as u64 + rng.random_range(0..=cfg.gaze_jitter_ms);
            if t >= end {
                break;
            }
            while shown + 1 < frame_times.len() && frame_times[shown + 1] <= t {
                shown += 1;
            }
            gaze.push(synth_gaze(&track, &states[shown], &camera, &cfg.oracle, &cfg.gaze, t, &mut rng));
        }
    }

    let log = SessionLog {
        meta: SessionMeta {
            width: camera.width,
            height: camera.width,
            frame_rate_hz: cfg.frame_rate_hz,
            gaze_rate_hz: cfg.gaze_rate_hz,
            source: "oracle".into(),
            gaze_source: cfg.gaze_source,
            track: cfg.track.clone(),
            seed: Some(cfg.seed),
            constants: cfg.constants(),
        },
        frames,
        gaze,
        actions,
    };
    log.validate()?;
    Ok(log)
}

/// A session advanced one frame at a time by an outside driver, such as a
/// person at the keyboard. The action current when frame `k + 1` is
/// rendered (or when the session finishes) is recorded for frame `k`.
#[derive(Clone, Debug)]
pub struct LiveSession {
    cfg: SessionConfig,
    track: Track,
    camera: Camera,
    state: CarState,
    current: DrivingAction,
    frames: Vec<Frame>,
    actions: Vec<DrivingAction>,
    gaze: Vec<GazeSample>,
}

impl LiveSession {
    /// Places the car at rest on the centerline at the start of the track and
    /// renders the first frame at `t_ms`.
    pub fn start(cfg: SessionConfig, t_ms: u64) -> Result<Self> {
        cfg.validate()?;
        let track = Track::new(TrackSpec::by_name(&cfg.track)?, cfg.vehicle.width)?;
        let camera = cfg.camera();
        let c = track.geometry.point_at(0.0);
        let d = track.geometry.direction_at(0.0);
        let state = CarState {
            x: c[0],
            y: c[1],
            heading: d[1].atan2(d[0]),
            speed: 0.0,
        };
        let first = render_frame(&track, &state, &camera, t_ms);
        Ok(LiveSession {
            cfg,
            track,
            camera,
            state,
            current: DrivingAction::default(),
            frames: vec![first],
            actions: Vec::new(),
            gaze: Vec::new(),
        })
    }

    pub fn latest_frame(&self) -> &Frame {
        self.frames.last().expect("a live session always has a frame")
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn gaze_count(&self) -> usize {
        self.gaze.len()
    }

    pub fn state(&self) -> &CarState {
        &self.state
    }

    pub fn current_action(&self) -> DrivingAction {
        self.current
    }

    /// Replaces the action applied from the next tick on.
    pub fn set_action(&mut self, action: DrivingAction) {
        self.current = action;
    }

    /// Records the current action for the latest frame, steps the car by one
    /// frame period and renders the next frame at `t_ms`.
    pub fn tick(&mut self, t_ms: u64) -> Result<()> {
        let last = self.latest_frame().t_ms;
        if t_ms <= last {
            return Err(Error::invalid(format!("tick at {t_ms} ms is not after the last frame at {last} ms")));
        }
        self.actions.push(self.current);
        self.state = step_dynamics(&self.state, &self.current, &self.cfg.vehicle, 1.0 / self.cfg.frame_rate_hz);
        self.frames.push(render_frame(&self.track, &self.state, &self.camera, t_ms));
        Ok(())
    }

    /// Appends a gaze sample unless it is not after the previous one or lies
    /// outside the frame; returns whether it was kept.
    pub fn push_gaze(&mut self, sample: GazeSample) -> bool {
        let w = self.camera.width as f64;
        let inside = sample.x >= 0.0 && sample.x < w && sample.y >= 0.0 && sample.y < w;
        let later = self.gaze.last().is_none_or(|g| sample.t_ms > g.t_ms);
        if inside && later {
            self.gaze.push(sample);
        }
        inside && later
    }

    /// Closes the session, recording the current action for the last frame.
    pub fn finish(mut self) -> Result<SessionLog> {
        self.actions.push(self.current);
        let log = SessionLog {
            meta: SessionMeta {
                width: self.camera.width,
                height: self.camera.width,
                frame_rate_hz: self.cfg.frame_rate_hz,
                gaze_rate_hz: self.cfg.gaze_rate_hz,
                source: "human".into(),
                gaze_source: GazeSource::Human,
                track: self.cfg.track.clone(),
                seed: None,
                constants: self.cfg.constants(),
            },
            frames: self.frames,
            gaze: self.gaze,
            actions: self.actions,
        };
        log.validate()?;
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_frames: usize, seed: u64) -> SessionConfig {
        SessionConfig {
            n_frames,
            seed,
            resolution: 48,
            ..SessionConfig::default()
        }
    }

    #[test]
    fn counts_match_rates() {
        let log = run_session(&small(100, 3)).unwrap();
        assert_eq!(log.frames.len(), 100);
        assert_eq!(log.actions.len(), 100);
        assert!(log.gaze.len() >= 500, "{} gaze samples", log.gaze.len());
    }

    #[test]
    fn same_seed_same_log() {
        assert_eq!(run_session(&small(30, 9)).unwrap(), run_session(&small(30, 9)).unwrap());
        assert_ne!(run_session(&small(30, 9)).unwrap(), run_session(&small(30, 10)).unwrap());
    }

    #[test]
    fn gaze_switch_leaves_driving_unchanged() {
        let with = run_session(&small(20, 4)).unwrap();
        let without = run_session(&SessionConfig {
            gaze_source: GazeSource::None,
            ..small(20, 4)
        })
        .unwrap();
        assert!(without.gaze.is_empty());
        assert_eq!(with.frames, without.frames);
        assert_eq!(with.actions, without.actions);
    }

    #[test]
    fn clocks_interleave_irregularly() {
        let log = run_session(&small(100, 5)).unwrap();
        let frame_t: Vec<u64> = log.frames.iter().map(|f| f.t_ms).collect();
        // Offset of each gaze sample after the latest frame shown.
        let mut offsets = std::collections::BTreeSet::new();
        for g in &log.gaze {
            if let Some(&ft) = frame_t.iter().rev().find(|&&t| t <= g.t_ms) {
                offsets.insert(g.t_ms - ft);
            }
        }
        assert!(offsets.len() > 10, "offsets {offsets:?}");
        let gaps: std::collections::BTreeSet<u64> = frame_t.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps.len() > 1);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let log = run_session(&small(12, 1)).unwrap();
        log.save(dir.path()).unwrap();
        let back = SessionLog::load(dir.path()).unwrap();
        assert_eq!(back.meta, log.meta);
        assert_eq!(back.gaze, log.gaze);
        assert_eq!(back.actions, log.actions);
        assert!(back.frames == log.frames, "frames differ after reload");
    }

    #[test]
    fn validator_rejects_broken_logs() {
        let log = run_session(&small(5, 2)).unwrap();
        let mut bad = log.clone();
        bad.actions.pop();
        assert!(matches!(bad.validate(), Err(Error::InvalidSession(_))));
        let mut bad = log.clone();
        bad.gaze[3].t_ms = bad.gaze[2].t_ms;
        assert!(bad.validate().is_err());
        let mut bad = log.clone();
        bad.gaze[0].x = 48.0;
        assert!(bad.validate().is_err());
        let mut bad = log.clone();
        bad.frames[2].t_ms = bad.frames[1].t_ms;
        assert!(bad.validate().is_err());
        let mut bad = log;
        bad.meta.gaze_rate_hz = 5.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn live_session_records_one_action_per_frame() {
        let cfg = SessionConfig {
            resolution: 32,
            ..Default::default()
        };
        let mut live = LiveSession::start(cfg, 0).unwrap();
        assert!(live.push_gaze(GazeSample { t_ms: 5, x: 3.0, y: 4.0 }));
        assert!(!live.push_gaze(GazeSample { t_ms: 5, x: 3.0, y: 4.0 }));
        assert!(!live.push_gaze(GazeSample { t_ms: 9, x: 32.0, y: 4.0 }));
        live.set_action(DrivingAction::new(0.0, 1.0, 0.0));
        live.tick(100).unwrap();
        live.set_action(DrivingAction::new(0.5, 0.0, 0.0));
        live.tick(200).unwrap();
        assert!(live.tick(200).is_err());
        assert!(live.state().speed > 0.0);
        let log = live.finish().unwrap();
        assert_eq!(log.frames.len(), 3);
        assert_eq!(log.actions.len(), 3);
        assert_eq!(log.actions[0].throttle, 1.0);
        assert_eq!(log.actions[1].steering, 0.5);
        assert_eq!(log.gaze.len(), 1);
        assert_eq!(log.meta.source, "human");
    }
}
